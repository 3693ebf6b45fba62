//! Friedman's variable-span "supersmoother".
//!
//! Three running local-linear smooths (tweeter, midrange, woofer) are fit
//! with cross-validated residuals. The residuals are smoothed with the
//! midrange span, each point picks the span with the smallest smoothed
//! residual (optionally pushed toward the woofer by the bass control), the
//! span choices are smoothed with the midrange span, the three smooths are
//! interpolated at the chosen span, and a final tweeter pass cleans up the
//! result. Unit case weights, no periodic mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tweeter, midrange and woofer span fractions.
pub const SPANS: [f64; 3] = [0.05, 0.2, 0.5];

const BIG: f64 = 1.0e20;
const SML: f64 = 1.0e-7;
const EPS: f64 = 1.0e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    /// Bass enhancement in `[0, 10]`; 0 disables it, larger values favour smoother fits.
    pub bass: f64,
    /// Fixed span fraction in `(0, 1]`, bypassing span selection. For debugging.
    pub fixed_span: Option<f64>,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            bass: 0.0,
            fixed_span: None,
        }
    }
}

impl SmootherConfig {
    pub fn with_bass(bass: f64) -> Self {
        Self { bass, fixed_span: None }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=10.0).contains(&self.bass) {
            return Err(Error::Smoother(format!("bass must be in [0, 10], got {}", self.bass)));
        }
        if let Some(s) = self.fixed_span {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Smoother(format!("fixed span must be in (0, 1], got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherFit {
    /// Inputs sorted by `(x, y)`.
    pub x_sorted: Vec<f64>,
    /// Smoothed values aligned with `x_sorted`.
    pub smoothed: Vec<f64>,
    /// Span fraction used at each sorted point after smoothing the choices.
    pub spans_used: Vec<f64>,
    pub bass: f64,
    /// `order[k]` is the input index of the `k`-th sorted point.
    pub order: Vec<usize>,
}

impl SmootherFit {
    /// Smoothed values in the caller's original order.
    pub fn fitted(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.order.len()];
        for (k, &i) in self.order.iter().enumerate() {
            out[i] = self.smoothed[k];
        }
        out
    }
}

pub fn supersmooth(x: &[f64], y: &[f64], bass: f64) -> Result<SmootherFit> {
    supersmooth_with(x, y, &SmootherConfig::with_bass(bass))
}

pub fn supersmooth_with(x: &[f64], y: &[f64], config: &SmootherConfig) -> Result<SmootherFit> {
    config.validate()?;
    let n = x.len();
    if n != y.len() {
        return Err(Error::Smoother(format!("x has {n} values, y has {}", y.len())));
    }
    if n < 5 {
        return Err(Error::Smoother(format!("need at least 5 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Smoother("inputs must be finite".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    if xs[n - 1] <= xs[0] {
        return Err(Error::Smoother("x has zero variance".into()));
    }
    let (smoothed, spans_used) = supsmu(&xs, &ys, config);
    Ok(SmootherFit {
        x_sorted: xs,
        smoothed,
        spans_used,
        bass: config.bass,
        order,
    })
}

/// Core routine on sorted, non-constant `x`.
pub(crate) fn supsmu(x: &[f64], y: &[f64], config: &SmootherConfig) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    // Robust scale for the local-variance floor: interquartile-ish spread,
    // widened until non-zero.
    let mut i = n / 4;
    let mut j = 3 * i;
    let mut scale = x[j - 1] - x[i - 1];
    while scale <= 0.0 {
        if j < n {
            j += 1;
        }
        if i > 1 {
            i -= 1;
        }
        scale = x[j - 1] - x[i - 1];
    }
    let vsmlsq = (EPS * scale) * (EPS * scale);

    if let Some(span) = config.fixed_span {
        let smo = running_lines(x, y, span, vsmlsq, None);
        return (smo, vec![span; n]);
    }

    let mut fits: [Vec<f64>; 3] = Default::default();
    let mut resid: [Vec<f64>; 3] = Default::default();
    let mut acvr = vec![0.0; n];
    for k in 0..3 {
        fits[k] = running_lines(x, y, SPANS[k], vsmlsq, Some(&mut acvr));
        resid[k] = running_lines(x, &acvr, SPANS[1], vsmlsq, None);
    }

    let alpha = config.bass;
    let mut chosen = vec![0.0; n];
    for j in 0..n {
        let mut resmin = BIG;
        for k in 0..3 {
            if resid[k][j] < resmin {
                resmin = resid[k][j];
                chosen[j] = SPANS[k];
            }
        }
        if alpha > 0.0 && alpha <= 10.0 && resmin < resid[2][j] && resmin > 0.0 {
            chosen[j] += (SPANS[2] - chosen[j]) * (resmin / resid[2][j]).max(SML).powf(10.0 - alpha);
        }
    }

    let mut spans = running_lines(x, &chosen, SPANS[1], vsmlsq, None);
    let mut blended = vec![0.0; n];
    for j in 0..n {
        spans[j] = spans[j].clamp(SPANS[0], SPANS[2]);
        let f = spans[j] - SPANS[1];
        blended[j] = if f >= 0.0 {
            let f = f / (SPANS[2] - SPANS[1]);
            (1.0 - f) * fits[1][j] + f * fits[2][j]
        } else {
            let f = -f / (SPANS[1] - SPANS[0]);
            (1.0 - f) * fits[1][j] + f * fits[0][j]
        };
    }
    let smo = running_lines(x, &blended, SPANS[0], vsmlsq, None);
    (smo, spans)
}

/// Running local-linear smooth over a symmetric window of `span * n` points.
/// When `cv` is given it receives leave-one-out absolute residuals. Fitted
/// values are averaged across tied `x`.
fn running_lines(x: &[f64], y: &[f64], span: f64, vsmlsq: f64, mut cv: Option<&mut Vec<f64>>) -> Vec<f64> {
    let n = x.len();
    let ibw = ((0.5 * span * n as f64 + 0.5) as usize).max(2);
    let it = (2 * ibw + 1).min(n);

    let mut w = Window::default();
    for k in 0..it {
        w.add(x[k], y[k]);
    }
    let mut smo = vec![0.0; n];
    for j in 0..n {
        let incoming = j + ibw;
        if j > ibw && incoming < n {
            let out = j - ibw - 1;
            w.remove(x[out], y[out]);
            w.add(x[incoming], y[incoming]);
        }
        let slope = if w.var > vsmlsq { w.cvar / w.var } else { 0.0 };
        smo[j] = slope * (x[j] - w.xm) + w.ym;
        if let Some(acvr) = cv.as_deref_mut() {
            let mut h = if w.fbw > 0.0 { 1.0 / w.fbw } else { 0.0 };
            if w.var > vsmlsq {
                h += (x[j] - w.xm).powi(2) / w.var;
            }
            acvr[j] = 0.0;
            let a = 1.0 - h;
            if a > 0.0 {
                acvr[j] = (y[j] - smo[j]).abs() / a;
            } else if j > 0 {
                acvr[j] = acvr[j - 1];
            }
        }
    }

    let mut j = 0;
    while j < n {
        let j0 = j;
        let mut sy = smo[j];
        let mut count = 1.0;
        while j < n - 1 && x[j + 1] <= x[j] {
            j += 1;
            sy += smo[j];
            count += 1.0;
        }
        if j > j0 {
            let a = sy / count;
            smo[j0..=j].iter_mut().for_each(|v| *v = a);
        }
        j += 1;
    }
    smo
}

/// Streaming means, variance and covariance of the points in the window.
#[derive(Default)]
struct Window {
    xm: f64,
    ym: f64,
    var: f64,
    cvar: f64,
    fbw: f64,
}

impl Window {
    fn add(&mut self, xi: f64, yi: f64) {
        let fbo = self.fbw;
        self.fbw += 1.0;
        self.xm = (fbo * self.xm + xi) / self.fbw;
        self.ym = (fbo * self.ym + yi) / self.fbw;
        let tmp = if fbo > 0.0 {
            self.fbw * (xi - self.xm) / fbo
        } else {
            0.0
        };
        self.var += tmp * (xi - self.xm);
        self.cvar += tmp * (yi - self.ym);
    }

    fn remove(&mut self, xo: f64, yo: f64) {
        let fbo = self.fbw;
        self.fbw -= 1.0;
        let tmp = if self.fbw > 0.0 {
            fbo * (xo - self.xm) / self.fbw
        } else {
            0.0
        };
        self.var -= tmp * (xo - self.xm);
        self.cvar -= tmp * (yo - self.ym);
        if self.fbw > 0.0 {
            self.xm = (fbo * self.xm - xo) / self.fbw;
            self.ym = (fbo * self.ym - yo) / self.fbw;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn reproduces_lines() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let fit = supersmooth(&x, &y, 0.0).unwrap();
        for (s, t) in fit.fitted().iter().zip(&y) {
            assert!((s - t).abs() <= 1e-6, "{s} vs {t}");
        }
        let fixed = supersmooth_with(
            &x,
            &y,
            &SmootherConfig {
                bass: 0.0,
                fixed_span: Some(0.3),
            },
        )
        .unwrap();
        for (s, t) in fixed.fitted().iter().zip(&y) {
            assert!((s - t).abs() <= 1e-9);
        }
    }

    #[test]
    fn constant_stays_constant() {
        let x: Vec<f64> = (0..57).map(|i| ((i * 37) % 57) as f64).collect();
        let fit = supersmooth(&x, &vec![2.5; 57], 3.0).unwrap();
        assert!(fit.smoothed.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn recovers_sine() {
        let mut rng = crate::rng::seeded(123);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let truth: Vec<f64> = x.iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).collect();
        let y: Vec<f64> = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();
        let fit = supersmooth(&x, &y, 0.0).unwrap();
        let sm = fit.fitted();
        let rmse = (sm.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 500.0).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn bass_shifts_spans_toward_woofer() {
        let mut rng = crate::rng::seeded(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let x: Vec<f64> = (0..300).map(|i| i as f64 / 300.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + noise.sample(&mut rng)).collect();
        let plain = supersmooth(&x, &y, 0.0).unwrap();
        let bassy = supersmooth(&x, &y, 9.0).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&bassy.spans_used) >= mean(&plain.spans_used));
        assert!(bassy.spans_used.iter().all(|s| (SPANS[0]..=SPANS[2]).contains(s)));
    }

    #[test]
    fn ties_share_fitted_value() {
        let x = [0.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.0, 1.0, 3.0, 2.0, 4.0, 3.0, 6.0, 5.0];
        let fit = supersmooth(&x, &y, 0.0).unwrap();
        assert_eq!(fit.smoothed[1], fit.smoothed[2]);
        assert_eq!(fit.smoothed[2], fit.smoothed[3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(supersmooth(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 0.0).is_err());
        assert!(supersmooth(&[1.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 0.0).is_err());
        assert!(supersmooth(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0; 5], 11.0).is_err());
    }
}
