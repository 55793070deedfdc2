use clap::Args;
use serde::Serialize;
use std::path::PathBuf;
use std::str::FromStr;

/// `A:B:N` (N evenly spaced values, ends included) or a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Span {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64).collect()
    }
}

impl FromStr for Span {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        match parts.as_slice() {
            [x] => {
                let v = num(x)?;
                Ok(Span { lo: v, hi: v, n: 1 })
            }
            [a, b, n] => {
                let n: usize = n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?;
                if n == 0 {
                    return Err("N must be at least 1".into());
                }
                Ok(Span { lo: num(a)?, hi: num(b)?, n })
            }
            _ => Err(format!("expected A:B:N or a number, got `{s}`")),
        }
    }
}

/// Comma-separated quaternion `w,x,y,z`; normalised on use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuatArg(pub [f64; 4]);

impl FromStr for QuatArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"))).collect::<Result<_, _>>()?;
        let a: [f64; 4] = v.try_into().map_err(|_| "a quaternion has four components".to_string())?;
        Ok(QuatArg(a))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Swimmer document (JSON, drag or mobility form).
    #[arg(long, value_name = "PATH", conflicts_with = "bundled")]
    pub swimmer: Option<PathBuf>,
    /// Bundled swimmer by name; see `magswim list`.
    #[arg(long, value_name = "NAME")]
    pub bundled: Option<String>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub threads: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans() {
        let s: Span = "-1:1:5".parse().unwrap();
        assert_eq!(s.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!("0.25".parse::<Span>().unwrap().values(), vec![0.25]);
        assert!("0:1:0".parse::<Span>().is_err());
        assert!("0:1".parse::<Span>().is_err());
        assert!("a:1:3".parse::<Span>().is_err());
    }

    #[test]
    fn quaternions() {
        assert_eq!("1, 0,0,-0.5".parse::<QuatArg>().unwrap(), QuatArg([1.0, 0.0, 0.0, -0.5]));
        assert!("1,0,0".parse::<QuatArg>().is_err());
    }
}
