//! Structural similarity with Gaussian-weighted local statistics, and the
//! view-consistency loss built from it.

use crate::diffcore::{Tape, Tensor, Var};
use crate::{Error, Result};

pub const DEFAULT_DELTA: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub window_sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::for_range(1.0)
    }
}

impl SsimConfig {
    /// 11×11 window, σ = 1.5, `C1 = (0.01 R)²`, `C2 = (0.03 R)²`.
    pub fn for_range(dynamic_range: f64) -> Self {
        SsimConfig {
            window: 11,
            window_sigma: 1.5,
            c1: (0.01 * dynamic_range).powi(2),
            c2: (0.03 * dynamic_range).powi(2),
            dynamic_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::invalid("SsimConfig", "window must be odd and at least 3"));
        }
        if !(self.window_sigma > 0.0 && self.c1 > 0.0 && self.c2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::invalid("SsimConfig", "sigma, C1, C2 and range must be positive"));
        }
        Ok(())
    }

    fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.window_sigma * self.window_sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

struct Geometry {
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
}

fn geometry(a: &Tensor, b: &Tensor, cfg: &SsimConfig) -> Result<Geometry> {
    cfg.validate()?;
    if a.shape() != b.shape() {
        return Err(Error::shape("ssim", a.shape(), b.shape()));
    }
    let (h, w, c) = match a.shape() {
        [h, w] => (*h, *w, 1),
        [h, w, c] => (*h, *w, *c),
        s => return Err(Error::invalid("ssim", format!("expected [H, W] or [H, W, C], got {s:?}"))),
    };
    if h < cfg.window || w < cfg.window || c == 0 {
        return Err(Error::invalid(
            "ssim",
            format!("image {h}x{w} is smaller than the {0}x{0} window", cfg.window),
        ));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("ssim"));
    }
    Ok(Geometry {
        h,
        w,
        c,
        oh: h - cfg.window + 1,
        ow: w - cfg.window + 1,
    })
}

/// Valid separable correlation of one channel.
fn filter(src: &[f64], g: &Geometry, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let mut tmp = vec![0.0; g.h * g.ow];
    for y in 0..g.h {
        for x in 0..g.ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src[y * g.w + x + i];
            }
            tmp[y * g.ow + x] = acc;
        }
    }
    let mut out = vec![0.0; g.oh * g.ow];
    for y in 0..g.oh {
        for x in 0..g.ow {
            let mut acc = 0.0;
            for i in 0..n {
                acc += k[i] * tmp[(y + i) * g.ow + x];
            }
            out[y * g.ow + x] = acc;
        }
    }
    out
}

/// Adjoint of [`filter`].
fn filter_adjoint(grad: &[f64], g: &Geometry, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let mut tmp = vec![0.0; g.h * g.ow];
    for y in 0..g.oh {
        for x in 0..g.ow {
            let v = grad[y * g.ow + x];
            for i in 0..n {
                tmp[(y + i) * g.ow + x] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; g.h * g.w];
    for y in 0..g.h {
        for x in 0..g.ow {
            let v = tmp[y * g.ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * g.w + x + i] += kv * v;
            }
        }
    }
    out
}

fn channel(t: &Tensor, g: &Geometry, ch: usize) -> Vec<f64> {
    t.data().iter().skip(ch).step_by(g.c).copied().collect()
}

struct Moments {
    ma: Vec<f64>,
    mb: Vec<f64>,
    eaa: Vec<f64>,
    ebb: Vec<f64>,
    eab: Vec<f64>,
}

fn moments(a: &[f64], b: &[f64], g: &Geometry, k: &[f64]) -> Moments {
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    Moments {
        ma: filter(a, g, k),
        mb: filter(b, g, k),
        eaa: filter(&aa, g, k),
        ebb: filter(&bb, g, k),
        eab: filter(&ab, g, k),
    }
}

fn ssim_map_value(m: &Moments, i: usize, cfg: &SsimConfig) -> f64 {
    let (ma, mb) = (m.ma[i], m.mb[i]);
    let va = m.eaa[i] - ma * ma;
    let vb = m.ebb[i] - mb * mb;
    let cov = m.eab[i] - ma * mb;
    ((2.0 * ma * mb + cfg.c1) * (2.0 * cov + cfg.c2)) / ((ma * ma + mb * mb + cfg.c1) * (va + vb + cfg.c2))
}

/// Mean SSIM over valid window positions and channels. Accepts `[H, W]` or
/// `[H, W, C]` images no smaller than the window.
pub fn ssim(a: &Tensor, b: &Tensor, cfg: &SsimConfig) -> Result<f64> {
    let g = geometry(a, b, cfg)?;
    let k = cfg.kernel();
    let mut total = 0.0;
    for ch in 0..g.c {
        let m = moments(&channel(a, &g, ch), &channel(b, &g, ch), &g, &k);
        for i in 0..g.oh * g.ow {
            total += ssim_map_value(&m, i, cfg);
        }
    }
    Ok(total / (g.c * g.oh * g.ow) as f64)
}

/// SSIM and its gradients with respect to both images.
pub fn ssim_with_grad(a: &Tensor, b: &Tensor, cfg: &SsimConfig) -> Result<(f64, Tensor, Tensor)> {
    let g = geometry(a, b, cfg)?;
    let k = cfg.kernel();
    let count = (g.c * g.oh * g.ow) as f64;
    let mut total = 0.0;
    let mut ga = Tensor::zeros(a.shape());
    let mut gb = Tensor::zeros(b.shape());
    let no = g.oh * g.ow;
    for ch in 0..g.c {
        let ac = channel(a, &g, ch);
        let bc = channel(b, &g, ch);
        let m = moments(&ac, &bc, &g, &k);
        let mut d_ma = vec![0.0; no];
        let mut d_mb = vec![0.0; no];
        let mut d_eaa = vec![0.0; no];
        let mut d_ebb = vec![0.0; no];
        let mut d_eab = vec![0.0; no];
        for i in 0..no {
            let (ma, mb) = (m.ma[i], m.mb[i]);
            let a1 = 2.0 * ma * mb + cfg.c1;
            let a2 = 2.0 * (m.eab[i] - ma * mb) + cfg.c2;
            let b1 = ma * ma + mb * mb + cfg.c1;
            let b2 = (m.eaa[i] - ma * ma) + (m.ebb[i] - mb * mb) + cfg.c2;
            let d = b1 * b2;
            let s = a1 * a2 / d;
            total += s;
            let scale = 1.0 / count;
            d_eab[i] = scale * 2.0 * a1 / d;
            d_eaa[i] = -scale * s / b2;
            d_ebb[i] = d_eaa[i];
            d_ma[i] = scale * (2.0 * mb * (a2 - a1) / d - 2.0 * ma * s * (1.0 / b1 - 1.0 / b2));
            d_mb[i] = scale * (2.0 * ma * (a2 - a1) / d - 2.0 * mb * s * (1.0 / b1 - 1.0 / b2));
        }
        let back = |v: &[f64]| filter_adjoint(v, &g, &k);
        let (bma, bmb, baa, bbb, bab) = (back(&d_ma), back(&d_mb), back(&d_eaa), back(&d_ebb), back(&d_eab));
        for p in 0..g.h * g.w {
            ga.data_mut()[p * g.c + ch] = bma[p] + 2.0 * ac[p] * baa[p] + bc[p] * bab[p];
            gb.data_mut()[p * g.c + ch] = bmb[p] + 2.0 * bc[p] * bbb[p] + ac[p] * bab[p];
        }
    }
    Ok((total / count, ga, gb))
}

/// Records SSIM on a tape.
pub fn ssim_on(tape: &mut Tape, a: Var, b: Var, cfg: &SsimConfig) -> Result<Var> {
    let (value, ga, gb) = ssim_with_grad(tape.value(a), tape.value(b), cfg)?;
    Ok(tape.custom(
        &[a, b],
        Tensor::scalar(value),
        Box::new(move |g, _| {
            let s = g.item().unwrap_or(0.0);
            vec![ga.map(|v| v * s), gb.map(|v| v * s)]
        }),
    ))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::invalid("view_consistency_loss", format!("delta must be in [0, 1], got {delta}")));
    }
    Ok(())
}

fn mean_abs(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.numel().max(1) as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n
}

/// `(δ/2)(1 − SSIM(a, b)) + (1 − δ) · mean |a − b|`.
///
/// Exactly zero for identical images; the SSIM term is skipped when `δ = 0`.
pub fn view_consistency_loss(a: &Tensor, b: &Tensor, delta: f64, cfg: &SsimConfig) -> Result<f64> {
    check_delta(delta)?;
    if a.shape() != b.shape() {
        return Err(Error::shape("view_consistency_loss", a.shape(), b.shape()));
    }
    if a == b {
        geometry(a, b, cfg)?;
        return Ok(0.0);
    }
    let l1 = mean_abs(a, b);
    let structural = if delta > 0.0 { delta / 2.0 * (1.0 - ssim(a, b, cfg)?) } else { 0.0 };
    Ok(structural + (1.0 - delta) * l1)
}

/// Loss and gradients with respect to both images. The subgradient of `|·|`
/// at zero is taken as zero.
pub fn view_consistency_loss_with_grad(a: &Tensor, b: &Tensor, delta: f64, cfg: &SsimConfig) -> Result<(f64, Tensor, Tensor)> {
    check_delta(delta)?;
    let (s, gsa, gsb) = ssim_with_grad(a, b, cfg)?;
    let n = a.numel() as f64;
    let l1 = mean_abs(a, b);
    let mut ga = gsa.map(|v| -delta / 2.0 * v);
    let mut gb = gsb.map(|v| -delta / 2.0 * v);
    for ((gav, gbv), (x, y)) in ga.data_mut().iter_mut().zip(gb.data_mut()).zip(a.data().iter().zip(b.data())) {
        let sign = if x > y { 1.0 } else if x < y { -1.0 } else { 0.0 };
        *gav += (1.0 - delta) * sign / n;
        *gbv -= (1.0 - delta) * sign / n;
    }
    let value = if a == b { 0.0 } else { delta / 2.0 * (1.0 - s) + (1.0 - delta) * l1 };
    Ok((value, ga, gb))
}

/// Records the view-consistency loss on a tape.
pub fn view_consistency_on(tape: &mut Tape, a: Var, b: Var, delta: f64, cfg: &SsimConfig) -> Result<Var> {
    let (value, ga, gb) = view_consistency_loss_with_grad(tape.value(a), tape.value(b), delta, cfg)?;
    Ok(tape.custom(
        &[a, b],
        Tensor::scalar(value),
        Box::new(move |g, _| {
            let s = g.item().unwrap_or(0.0);
            vec![ga.map(|v| v * s), gb.map(|v| v * s)]
        }),
    ))
}
