use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MIN_TRACE_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceKind {
    /// Hahn echo versus τ; the envelope decays as exp(−2τ/T_M).
    #[default]
    TwoPulse,
    /// Stimulated echo versus T; the envelope decays as exp(−T/T₁).
    ThreePulse,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::TwoPulse => "two-pulse",
            TraceKind::ThreePulse => "three-pulse",
        }
    }

    /// Factor multiplying t/T in the decay exponent.
    pub(crate) fn rate_factor(self) -> f64 {
        match self {
            TraceKind::TwoPulse => 2.0,
            TraceKind::ThreePulse => 1.0,
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "two-pulse" | "2p" => Ok(TraceKind::TwoPulse),
            "three-pulse" | "3p" => Ok(TraceKind::ThreePulse),
            other => Err(Error::InvalidTrace(format!("unknown trace kind `{other}`"))),
        }
    }
}

/// A sampled echo-decay or nutation trace. Times in μs, field in mT.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    times: Vec<f64>,
    amplitude: Vec<f64>,
    pub kind: TraceKind,
    pub field: f64,
}

impl DecayTrace {
    pub fn new(times: Vec<f64>, amplitude: Vec<f64>, kind: TraceKind, field: f64) -> Result<Self> {
        if times.len() != amplitude.len() {
            return Err(Error::InvalidTrace(format!("{} times but {} amplitudes", times.len(), amplitude.len())));
        }
        if times.len() < MIN_TRACE_POINTS {
            return Err(Error::InvalidTrace(format!("{} points, need at least {MIN_TRACE_POINTS}", times.len())));
        }
        if !field.is_finite() || field < 0.0 {
            return Err(Error::InvalidTrace(format!("field must be finite and non-negative, got {field}")));
        }
        for (i, (&t, &y)) in times.iter().zip(&amplitude).enumerate() {
            if !t.is_finite() || !y.is_finite() {
                return Err(Error::InvalidTrace(format!("point {}: non-finite value", i + 1)));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::InvalidTrace(format!("point {}: time {t} not strictly ascending", i + 1)));
            }
        }
        Ok(Self { times, amplitude, kind, field })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Median sampling interval.
    pub fn typical_step(&self) -> f64 {
        let mut dt: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        dt.sort_by(f64::total_cmp);
        dt[dt.len() / 2]
    }

    /// The sampling interval if the times are uniform to 1e-9 relative.
    pub fn uniform_step(&self) -> Result<f64> {
        let dt = self.span() / (self.len() - 1) as f64;
        for (i, w) in self.times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                return Err(Error::InvalidTrace(format!("non-uniform sampling at point {}", i + 2)));
            }
        }
        Ok(dt)
    }

    /// Parse `t_us,amplitude` CSV with optional `# kind=` and required `# field_mT=` comments.
    /// Row numbers in errors count physical lines from 1.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut kind = TraceKind::default();
        let mut field = None;
        let mut header_seen = false;
        let mut times = Vec::new();
        let mut amplitude = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let row = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    match key.trim() {
                        "kind" => kind = value.parse()?,
                        "field_mT" => {
                            field = Some(value.trim().parse::<f64>().map_err(|_| {
                                Error::InvalidTrace(format!("row {row}: bad field_mT `{}`", value.trim()))
                            })?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["t_us", "amplitude"] {
                    return Err(Error::InvalidTrace(format!("row {row}: expected header `t_us,amplitude`, got `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidTrace(format!("row {row}: malformed `{line}`")))
            };
            let t = parse(cols.next())?;
            let y = parse(cols.next())?;
            if cols.next().is_some() {
                return Err(Error::InvalidTrace(format!("row {row}: too many columns")));
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(Error::InvalidTrace(format!("row {row}: time {t} not strictly ascending")));
                }
            }
            times.push(t);
            amplitude.push(y);
        }
        if !header_seen {
            return Err(Error::InvalidTrace("missing header `t_us,amplitude`".into()));
        }
        let field = field.ok_or_else(|| Error::InvalidTrace("missing `# field_mT=` line".into()))?;
        Self::new(times, amplitude, kind, field)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# kind={}\n# field_mT={}\nt_us,amplitude\n", self.kind, self.field);
        for (t, y) in self.times.iter().zip(&self.amplitude) {
            out.push_str(&format!("{t:e},{y:e}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> DecayTrace {
        let t: Vec<f64> = (0..n).map(|i| 0.1 + 0.02 * i as f64).collect();
        let y = t.iter().map(|x| (-x).exp()).collect();
        DecayTrace::new(t, y, TraceKind::ThreePulse, 410.0).unwrap()
    }

    #[test]
    fn validation() {
        assert!(DecayTrace::new(vec![0.0; 10], vec![0.0; 10], TraceKind::TwoPulse, 1.0).is_err());
        let mut t: Vec<f64> = (0..20).map(f64::from).collect();
        t[7] = t[6];
        let err = DecayTrace::new(t, vec![0.0; 20], TraceKind::TwoPulse, 1.0).unwrap_err();
        assert!(err.to_string().contains("point 8"));
    }

    #[test]
    fn csv_round_trip() {
        let tr = ramp(32);
        let back = DecayTrace::from_csv(&tr.to_csv()).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn csv_reports_row_of_bad_time() {
        let mut text = String::from("# field_mT=300\nt_us,amplitude\n");
        for i in 0..20 {
            let t = if i == 5 { 0.0 } else { i as f64 };
            text.push_str(&format!("{t},1.0\n"));
        }
        let err = DecayTrace::from_csv(&text).unwrap_err().to_string();
        assert!(err.contains("row 8"), "{err}");
    }

    #[test]
    fn csv_requires_field() {
        let mut text = String::from("t_us,amplitude\n");
        for i in 0..20 {
            text.push_str(&format!("{i},1\n"));
        }
        assert!(DecayTrace::from_csv(&text).is_err());
    }

    #[test]
    fn uniform_step_detection() {
        assert!((ramp(20).uniform_step().unwrap() - 0.02).abs() < 1e-12);
        let mut t: Vec<f64> = (0..20).map(f64::from).collect();
        t[10] += 0.01;
        let tr = DecayTrace::new(t, vec![0.0; 20], TraceKind::TwoPulse, 1.0).unwrap();
        assert!(tr.uniform_step().is_err());
    }
}
