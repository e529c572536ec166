//! Estimator selectors: `kf:oracle`, `kf:fixed=<r>` or `rkn:<checkpoint path>`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    KfOracle,
    /// Kalman filter with the measurement variance fixed to `r`.
    KfFixed(f64),
    Rkn(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError(pub String);

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SpecError {}

const GRAMMAR: &str = "expected kf:oracle, kf:fixed=<r> or rkn:<checkpoint>";

impl FromStr for EstimatorSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        let s = s.trim();
        let bad = |why: &str| SpecError(format!("bad estimator {s:?}: {why}"));
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad(GRAMMAR))?;
        match kind {
            "kf" if rest == "oracle" => Ok(EstimatorSpec::KfOracle),
            "kf" => {
                let value = rest.strip_prefix("fixed=").ok_or_else(|| bad(GRAMMAR))?;
                let r: f64 = value.parse().map_err(|_| bad("the fixed variance is not a number"))?;
                if !(r > 0.0 && r.is_finite()) {
                    return Err(bad("the fixed variance must be positive"));
                }
                Ok(EstimatorSpec::KfFixed(r))
            }
            "rkn" if !rest.is_empty() => Ok(EstimatorSpec::Rkn(PathBuf::from(rest))),
            "rkn" => Err(bad("missing checkpoint path")),
            _ => Err(bad(GRAMMAR)),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::KfOracle => f.write_str("kf:oracle"),
            EstimatorSpec::KfFixed(r) => write!(f, "kf:fixed={r}"),
            EstimatorSpec::Rkn(p) => write!(f, "rkn:{}", p.display()),
        }
    }
}

/// Comma-separated list. Paths containing commas are not supported.
pub fn parse_estimator_list(s: &str) -> Result<Vec<EstimatorSpec>, SpecError> {
    let specs = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        return Err(SpecError("no estimator given".into()));
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        assert_eq!("kf:oracle".parse(), Ok(EstimatorSpec::KfOracle));
        assert_eq!("kf:fixed=1".parse(), Ok(EstimatorSpec::KfFixed(1.0)));
        assert_eq!("kf:fixed=0.25".parse(), Ok(EstimatorSpec::KfFixed(0.25)));
        assert_eq!("rkn:out/a.json".parse(), Ok(EstimatorSpec::Rkn("out/a.json".into())));
        for bad in ["", "kf", "kf:", "kf:fixed=", "kf:fixed=-1", "kf:fixed=nan", "kf:fixed=inf", "rkn:", "ukf:oracle"] {
            assert!(bad.parse::<EstimatorSpec>().is_err(), "{bad}");
        }
        let list = parse_estimator_list("kf:oracle, kf:fixed=1,rkn:c.json").unwrap();
        assert_eq!(list.len(), 3);
        assert!(parse_estimator_list(" , ").is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["kf:oracle", "kf:fixed=1", "kf:fixed=0.5", "rkn:x/y.json"] {
            assert_eq!(s.parse::<EstimatorSpec>().unwrap().to_string(), s);
        }
    }
}
