//! Named densities and concave targets: `uniform`, `tri:<θ>`, `quad6`
//! (`6x(1 − x)`), `sine` (`(π/2)·sin(πx)`), plus mixtures loaded from JSON
//! and tabulated functions loaded from CSV with header `x,y`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::approx::ConcaveTarget;
use crate::dist::{to_piecewise_linear, PiecewiseLinear, PolygonalParams};
use crate::divergence::DensityFn;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Uniform,
    Triangle(f64),
    Quad6,
    Sine,
    Mixture(PolygonalParams),
    Tabulated(PiecewiseLinear),
}

impl FromStr for Target {
    type Err = Error;

    /// Parses the built-in names only; see [`Target::resolve`] for files.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "quad6" => Ok(Self::Quad6),
            "sine" => Ok(Self::Sine),
            _ => {
                let theta = s
                    .strip_prefix("tri:")
                    .ok_or_else(|| Error::Config(format!("unknown target `{s}`")))?;
                let theta: f64 = theta
                    .parse()
                    .map_err(|_| Error::Config(format!("bad mode in `{s}`")))?;
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::Domain {
                        what: "theta",
                        value: theta,
                    });
                }
                Ok(Self::Triangle(theta))
            }
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => f.write_str("uniform"),
            Self::Triangle(t) => write!(f, "tri:{t}"),
            Self::Quad6 => f.write_str("quad6"),
            Self::Sine => f.write_str("sine"),
            Self::Mixture(p) => write!(f, "mixture(g={})", p.g()),
            Self::Tabulated(pl) => write!(f, "tabulated({} knots)", pl.knots().len()),
        }
    }
}

#[derive(serde::Deserialize)]
struct Row {
    x: f64,
    y: f64,
}

impl Target {
    /// A built-in name, or else a path: `.csv` files are tabulated
    /// functions, anything else is read as mixture parameters in JSON.
    pub fn resolve(name: &str) -> Result<Self> {
        if let Ok(t) = name.parse() {
            return Ok(t);
        }
        let path = Path::new(name);
        if !path.exists() {
            return Err(Error::Config(format!(
                "`{name}` is neither a built-in target (uniform, tri:<θ>, quad6, sine) nor a file"
            )));
        }
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        {
            let mut rdr = csv::Reader::from_path(path)?;
            let mut knots = Vec::new();
            let mut values = Vec::new();
            for row in rdr.deserialize() {
                let Row { x, y } = row?;
                knots.push(x);
                values.push(y);
            }
            return Ok(Self::Tabulated(PiecewiseLinear::new(knots, values)?));
        }
        let text = std::fs::read_to_string(path)?;
        Ok(Self::Mixture(serde_json::from_str(&text)?))
    }

    /// The target as a mixture when it is one.
    pub fn params(&self) -> Option<PolygonalParams> {
        match self {
            Self::Uniform => Some(PolygonalParams::uniform()),
            Self::Triangle(t) => PolygonalParams::single(*t).ok(),
            Self::Mixture(p) => Some(p.clone()),
            _ => None,
        }
    }

    pub fn concave(&self) -> ConcaveTarget {
        match self {
            Self::Uniform => ConcaveTarget::new(|_| 1.0, Some(0.0)),
            Self::Quad6 => ConcaveTarget::new(|x| 6.0 * x * (1.0 - x), Some(12.0)),
            Self::Sine => ConcaveTarget::new(|x| 0.5 * PI * (PI * x).sin(), Some(0.5 * PI.powi(3))),
            Self::Triangle(_) | Self::Mixture(_) => {
                let p = self.params().expect("mixture target");
                let pl = to_piecewise_linear(&p);
                let knots = pl.knots().to_vec();
                ConcaveTarget::new(move |x| p.density(x), None).with_breakpoints(knots)
            }
            Self::Tabulated(pl) => {
                let pl = pl.clone();
                let knots = pl.knots().to_vec();
                ConcaveTarget::new(move |x| pl.eval(x), None).with_breakpoints(knots)
            }
        }
    }

    pub fn density(&self) -> DensityFn {
        match self.params() {
            Some(p) => DensityFn::from_params(&p),
            None => self.concave().to_density(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureConfig;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parses_builtins() {
        assert_eq!("uniform".parse::<Target>().unwrap(), Target::Uniform);
        assert_eq!(
            "tri:0.25".parse::<Target>().unwrap(),
            Target::Triangle(0.25)
        );
        assert!("tri:1.5".parse::<Target>().is_err());
        assert!("tri:x".parse::<Target>().is_err());
        assert!(Target::resolve("no-such-target").is_err());
        for s in ["uniform", "tri:0.25", "quad6", "sine"] {
            assert_eq!(s.parse::<Target>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn builtin_densities_are_normalized() {
        let cfg = QuadratureConfig::default();
        for t in [
            Target::Uniform,
            Target::Triangle(0.3),
            Target::Quad6,
            Target::Sine,
        ] {
            assert_abs_diff_eq!(t.density().integral(&cfg), 1.0, epsilon = 1e-12);
            assert!(t.concave().spot_check().is_ok());
        }
    }
}
