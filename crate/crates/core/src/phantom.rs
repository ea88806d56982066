//! Analytic ground-truth conductivities.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::ConductivityField;
use crate::grid::GridSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum Phantom {
    Constant(Complex64),
    /// Background 1 with a bump to 2 near `(3.5, 6)` and a dip to 1/3 near
    /// `(6.5, 4)`, on the 10 cm square (rescaled with the extent).
    TwoBumps,
    /// `sigma'` as [`Phantom::TwoBumps`], `sigma''` 0.5 with one inclusion
    /// to 1 in the centre.
    ComplexDefault,
}

fn bump(x: f64, y: f64, cx: f64, cy: f64, width: f64) -> f64 {
    (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * width * width)).exp()
}

impl Phantom {
    /// `constant:<re>[,<im>]`, `two-bumps` or `complex-default`.
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        if let Some(v) = name.strip_prefix("constant:") {
            let parts: Vec<&str> = v.split(',').collect();
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::UnknownPhantom(name.into()))
            };
            let value = match parts.as_slice() {
                [re] => Complex64::new(num(re)?, 0.0),
                [re, im] => Complex64::new(num(re)?, num(im)?),
                _ => return Err(Error::UnknownPhantom(name.into())),
            };
            return Ok(Self::Constant(value));
        }
        match name {
            "two-bumps" => Ok(Self::TwoBumps),
            "complex-default" => Ok(Self::ComplexDefault),
            _ => Err(Error::UnknownPhantom(name.into())),
        }
    }

    pub fn is_complex(&self) -> bool {
        match self {
            Self::Constant(v) => v.im != 0.0,
            Self::TwoBumps => false,
            Self::ComplexDefault => true,
        }
    }

    /// Value at `(x, y)` in a square of side `extent`.
    pub fn eval(&self, x: f64, y: f64, extent: f64) -> Complex64 {
        let (x, y) = (10.0 * x / extent, 10.0 * y / extent);
        let real = || {
            (2f64.ln() * bump(x, y, 3.5, 6.0, 1.0) - 3f64.ln() * bump(x, y, 6.5, 4.0, 1.0)).exp()
        };
        match *self {
            Self::Constant(v) => v,
            Self::TwoBumps => Complex64::new(real(), 0.0),
            Self::ComplexDefault => Complex64::new(real(), 0.5 + 0.5 * bump(x, y, 5.0, 5.0, 1.5)),
        }
    }

    pub fn field(&self, grid: &GridSpec) -> Result<ConductivityField> {
        let v: Vec<Complex64> = grid
            .node_coords()
            .iter()
            .map(|&(x, y)| self.eval(x, y, grid.extent()))
            .collect();
        ConductivityField::new(
            *grid,
            v.iter().map(|z| z.re).collect(),
            v.iter().map(|z| z.im).collect(),
        )
    }
}

pub fn phantom(name: &str, grid: &GridSpec) -> Result<ConductivityField> {
    Phantom::parse(name)?.field(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant() {
        let g = GridSpec::new(5, 10.0).unwrap();
        let f = phantom("constant:1.0", &g).unwrap();
        assert!(f.sigma_re().iter().all(|&v| v == 1.0));
        assert!(f.is_real());
        let f = phantom("constant:1,0.5", &g).unwrap();
        assert!(f.sigma_im().iter().all(|&v| v == 0.5));
        assert!(phantom("constant:x", &g).is_err());
        assert!(matches!(
            phantom("three-bumps", &g),
            Err(Error::UnknownPhantom(_))
        ));
    }

    #[test]
    fn ranges() {
        let g = GridSpec::new(201, 10.0).unwrap();
        let f = phantom("complex-default", &g).unwrap();
        let (lo, hi) = f
            .sigma_re()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo >= 1.0 / 3.0 - 1e-12 && lo < 0.34, "{lo}");
        assert!(hi <= 2.0 + 1e-12 && hi > 1.99, "{hi}");
        let (lo, hi) = f
            .sigma_im()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo >= 0.5 && hi <= 1.0 && hi > 0.99);
        let corner = Phantom::TwoBumps.eval(0.0, 0.0, 10.0);
        assert!((corner.re - 1.0).abs() < 1e-3);
    }
}
