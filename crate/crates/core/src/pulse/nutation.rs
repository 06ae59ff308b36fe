//! Fourier analysis of nutation traces and classification of their peaks.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::trace::DecayTrace;
use crate::error::{Error, Result};

/// Gyromagnetic ratios |γ|/2π, MHz/T.
pub const GAMMA_H1_MHZ_PER_T: f64 = 42.5775;
pub const GAMMA_N14_MHZ_PER_T: f64 = 3.0777;
pub const GAMMA_N15_MHZ_PER_T: f64 = 4.3163;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nucleus {
    H1,
    N14,
    N15,
}

impl Nucleus {
    pub fn gamma(self) -> f64 {
        match self {
            Nucleus::H1 => GAMMA_H1_MHZ_PER_T,
            Nucleus::N14 => GAMMA_N14_MHZ_PER_T,
            Nucleus::N15 => GAMMA_N15_MHZ_PER_T,
        }
    }
}

impl FromStr for Nucleus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H1" | "1H" => Ok(Nucleus::H1),
            "N14" | "14N" => Ok(Nucleus::N14),
            "N15" | "15N" => Ok(Nucleus::N15),
            other => Err(Error::InvalidParameter { name: "nucleus", reason: format!("unknown tag `{other}` (H1, N14, N15)") }),
        }
    }
}

impl fmt::Display for Nucleus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nucleus::H1 => "H1",
            Nucleus::N14 => "N14",
            Nucleus::N15 => "N15",
        })
    }
}

/// Larmor frequency in MHz at `b_mt` millitesla.
pub fn larmor(nucleus: Nucleus, b_mt: f64) -> Result<f64> {
    if !(b_mt >= 0.0) || !b_mt.is_finite() {
        return Err(Error::InvalidParameter { name: "field", reason: format!("must be finite and non-negative, got {b_mt} mT") });
    }
    Ok(nucleus.gamma() * b_mt * 1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    None,
    #[default]
    Hann,
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Window::None),
            "hann" => Ok(Window::Hann),
            other => Err(Error::InvalidParameter { name: "window", reason: format!("unknown window `{other}` (none, hann)") }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PeakLabel {
    Rabi,
    TwoXLarmorN,
    LarmorH,
    Unassigned,
}

impl PeakLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PeakLabel::Rabi => "rabi",
            PeakLabel::TwoXLarmorN => "two_x_larmor_N",
            PeakLabel::LarmorH => "larmor_H",
            PeakLabel::Unassigned => "unassigned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NutationOptions {
    pub window: Window,
    pub zero_pad_factor: usize,
    /// Peaks must exceed this multiple of the median magnitude.
    pub noise_multiple: f64,
    /// Peaks must also exceed this fraction of the largest magnitude.
    pub min_relative_height: f64,
    pub nitrogen: Nucleus,
    /// Frequencies (MHz) where a Rabi oscillation is plausible; a nuclear
    /// assignment inside this band is reported as ambiguous with rabi.
    pub rabi_band: (f64, f64),
}

impl Default for NutationOptions {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            zero_pad_factor: 4,
            noise_multiple: 5.0,
            min_relative_height: 0.05,
            nitrogen: Nucleus::N14,
            rabi_band: (10.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub freq: f64,
    pub magnitude: f64,
    pub label: PeakLabel,
    /// Every label the peak is compatible with; more than one means ambiguous.
    pub candidates: Vec<PeakLabel>,
}

impl Peak {
    pub fn is_ambiguous(&self) -> bool {
        self.candidates.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NutationResult {
    /// Non-negative frequencies, MHz.
    pub freq_axis: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub peaks: Vec<Peak>,
    /// Bin spacing 1/(N_padded·dt), MHz.
    pub resolution: f64,
}

impl NutationResult {
    pub fn ambiguous_peaks(&self) -> impl Iterator<Item = &Peak> {
        self.peaks.iter().filter(|p| p.is_ambiguous())
    }

    pub fn spectrum_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("freq_MHz,magnitude\n");
        for (f, m) in self.freq_axis.iter().zip(&self.magnitude) {
            out.push_str(&format!("{f:.9e},{m:.9e}\n"));
        }
        out
    }

    pub fn peaks_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("freq_MHz,magnitude,label,candidates\n");
        for p in &self.peaks {
            let cands: Vec<&str> = p.candidates.iter().map(|l| l.as_str()).collect();
            out.push_str(&format!("{:.6},{:.9e},{},{}\n", p.freq, p.magnitude, p.label.as_str(), cands.join(";")));
        }
        out
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn nutation_fft(trace: &DecayTrace, opts: &NutationOptions) -> Result<NutationResult> {
    if opts.zero_pad_factor < 1 {
        return Err(Error::InvalidParameter { name: "zero_pad_factor", reason: "must be at least 1".into() });
    }
    let dt = trace.uniform_step()?;
    let y = trace.amplitude();
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let n_pad = n * opts.zero_pad_factor;
    let mut buf: Vec<Complex<f64>> = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = match opts.window {
                Window::None => 1.0,
                Window::Hann => 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos(),
            };
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    buf.resize(n_pad, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_pad).process(&mut buf);
    let resolution = 1.0 / (n_pad as f64 * dt);
    let half = n_pad / 2;
    let magnitude: Vec<f64> = buf[..=half].iter().map(|z| z.norm()).collect();
    let freq_axis: Vec<f64> = (0..=half).map(|k| k as f64 * resolution).collect();

    let max = magnitude.iter().copied().fold(0.0, f64::max);
    let floor = (opts.noise_multiple * median(&magnitude)).max(opts.min_relative_height * max);
    let mut peaks = Vec::new();
    if max > 0.0 {
        for k in 1..half {
            let (l, c, r) = (magnitude[k - 1], magnitude[k], magnitude[k + 1]);
            if c > floor && c > l && c >= r {
                // parabolic refinement of the bin position
                let denom = l - 2.0 * c + r;
                let shift = if denom != 0.0 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 };
                peaks.push(Peak { freq: (k as f64 + shift) * resolution, magnitude: c, label: PeakLabel::Unassigned, candidates: Vec::new() });
            }
        }
    }
    classify(&mut peaks, trace.field, resolution, opts)?;
    Ok(NutationResult { freq_axis, magnitude, peaks, resolution })
}

fn classify(peaks: &mut [Peak], field_mt: f64, resolution: f64, opts: &NutationOptions) -> Result<()> {
    let two_n = 2.0 * larmor(opts.nitrogen, field_mt)?;
    let h = larmor(Nucleus::H1, field_mt)?;
    let in_band = |f: f64| f >= opts.rabi_band.0 && f <= opts.rabi_band.1;
    for p in peaks.iter_mut() {
        if (p.freq - two_n).abs() <= resolution {
            p.candidates.push(PeakLabel::TwoXLarmorN);
        }
        if (p.freq - h).abs() <= resolution {
            p.candidates.push(PeakLabel::LarmorH);
        }
        if !p.candidates.is_empty() && in_band(p.freq) {
            p.candidates.push(PeakLabel::Rabi);
        }
        p.label = p.candidates.first().copied().unwrap_or(PeakLabel::Unassigned);
    }
    let strongest = peaks
        .iter_mut()
        .filter(|p| p.candidates.is_empty())
        .max_by(|a, b| a.magnitude.total_cmp(&b.magnitude));
    if let Some(p) = strongest {
        p.label = PeakLabel::Rabi;
        p.candidates.push(PeakLabel::Rabi);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::trace::TraceKind;
    use std::f64::consts::TAU;

    fn signal(components: &[(f64, f64)], n: usize, dt: f64, field: f64) -> DecayTrace {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let y = t.iter().map(|&x| components.iter().map(|&(f, a)| a * (TAU * f * x).cos()).sum()).collect();
        DecayTrace::new(t, y, TraceKind::TwoPulse, field).unwrap()
    }

    #[test]
    fn larmor_values() {
        assert!((larmor(Nucleus::H1, 1000.0).unwrap() - 42.5775).abs() < 1e-12);
        for nuc in [Nucleus::H1, Nucleus::N14, Nucleus::N15] {
            assert_eq!(larmor(nuc, 0.0).unwrap(), 0.0);
        }
        assert!((2.0 * larmor(Nucleus::N14, 410.0).unwrap() - 2.524).abs() < 1e-3);
        assert!((larmor(Nucleus::H1, 410.0).unwrap() - 17.46).abs() < 1e-2);
        assert!(larmor(Nucleus::H1, -1.0).is_err());
        assert!("C13".parse::<Nucleus>().is_err());
        assert_eq!("N15".parse::<Nucleus>().unwrap(), Nucleus::N15);
    }

    #[test]
    fn single_cosine() {
        let res = nutation_fft(&signal(&[(12.0, 1.0)], 400, 0.004, 410.0), &NutationOptions::default()).unwrap();
        assert_eq!(res.peaks.len(), 1);
        assert!((res.peaks[0].freq - 12.0).abs() <= res.resolution);
        assert_eq!(res.peaks[0].label, PeakLabel::Rabi);
    }

    #[test]
    fn constant_has_no_peaks() {
        let t: Vec<f64> = (0..128).map(|i| i as f64 * 0.004).collect();
        let tr = DecayTrace::new(t, vec![3.0; 128], TraceKind::TwoPulse, 410.0).unwrap();
        assert!(nutation_fft(&tr, &NutationOptions::default()).unwrap().peaks.is_empty());
    }

    #[test]
    fn reported_resolution() {
        let opts = NutationOptions { zero_pad_factor: 1, ..Default::default() };
        let res = nutation_fft(&signal(&[(12.0, 1.0)], 256, 0.002, 410.0), &opts).unwrap();
        assert!((res.resolution - 1.953).abs() < 1e-3);
    }

    #[test]
    fn three_components_labeled() {
        let two_n = 2.0 * larmor(Nucleus::N14, 410.0).unwrap();
        let h = larmor(Nucleus::H1, 410.0).unwrap();
        let tr = signal(&[(12.0, 1.0), (two_n, 0.5), (h, 0.4)], 400, 0.004, 410.0);
        let res = nutation_fft(&tr, &NutationOptions::default()).unwrap();
        let find = |f: f64| res.peaks.iter().find(|p| (p.freq - f).abs() <= res.resolution).unwrap_or_else(|| panic!("{f}: {:?}", res.peaks));
        assert_eq!(res.peaks.len(), 3, "{:?}", res.peaks);
        assert_eq!(find(12.0).label, PeakLabel::Rabi);
        assert_eq!(find(two_n).label, PeakLabel::TwoXLarmorN);
        let hp = find(h);
        assert_eq!(hp.label, PeakLabel::LarmorH);
        assert!(hp.candidates.contains(&PeakLabel::Rabi));
        assert_eq!(res.ambiguous_peaks().count(), 1);
    }

    #[test]
    fn labels_invariant_under_rescaling() {
        let tr = signal(&[(12.0, 1.0), (2.524, 0.5), (17.46, 0.4)], 400, 0.004, 410.0);
        let base = nutation_fft(&tr, &NutationOptions::default()).unwrap();
        for s in [1e-6, 0.3, 250.0] {
            let y: Vec<f64> = tr.amplitude().iter().map(|v| v * s).collect();
            let scaled = DecayTrace::new(tr.times().to_vec(), y, tr.kind, tr.field).unwrap();
            let res = nutation_fft(&scaled, &NutationOptions::default()).unwrap();
            let a: Vec<_> = base.peaks.iter().map(|p| (p.label, p.candidates.clone())).collect();
            let b: Vec<_> = res.peaks.iter().map(|p| (p.label, p.candidates.clone())).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn spectrum_is_real_symmetric() {
        // the reported half must match the mirrored half of the full DFT
        let tr = signal(&[(7.0, 1.0), (3.0, 0.2)], 64, 0.01, 300.0);
        let opts = NutationOptions { window: Window::None, zero_pad_factor: 1, ..Default::default() };
        let res = nutation_fft(&tr, &opts).unwrap();
        let mean = tr.amplitude().iter().sum::<f64>() / 64.0;
        let mut buf: Vec<Complex<f64>> = tr.amplitude().iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(64).process(&mut buf);
        for k in 1..32 {
            assert!((buf[k].norm() - buf[64 - k].norm()).abs() < 1e-9);
            assert!((res.magnitude[k] - buf[64 - k].norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut t: Vec<f64> = (0..32).map(|i| i as f64 * 0.004).collect();
        t[5] += 1e-4;
        let tr = DecayTrace::new(t, vec![0.0; 32], TraceKind::TwoPulse, 410.0).unwrap();
        assert!(nutation_fft(&tr, &NutationOptions::default()).is_err());
        let ok = signal(&[(5.0, 1.0)], 32, 0.004, 410.0);
        assert!(nutation_fft(&ok, &NutationOptions { zero_pad_factor: 0, ..Default::default() }).is_err());
    }
}
