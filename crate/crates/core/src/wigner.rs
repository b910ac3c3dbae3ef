//! Discrete Wigner transform on uniform grids.
//!
//! Forward: `W(x,p) = (1/2πħ) ∫ e^{−ipy/ħ} ρ(x+y/2, x−y/2) dy`, sampled at
//! `x_i = x₀ + iΔx`, offsets `y_k = (k − n_p/2)Δy` with `Δy = 4L/n_p`, and
//! momenta `p_j = (j − n_p/2)Δp` with `Δp·Δy = 2πħ/n_p`.
//!
//! Inverse: `ρ(x+y/2, x−y/2) = Δp Σ_j e^{ip_j y/ħ} W(x, p_j)`, the exact
//! discrete inverse of the forward sum.

use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, KernelSpec};

/// Boundary kernel values must stay below this fraction of the peak.
pub const BOUNDARY_DECAY: f64 = 1e-10;
const BINARY_MAGIC: &[u8; 4] = b"KPWG";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WignerGeometry {
    pub nx: usize,
    pub np: usize,
    /// x covers center ± half_width; offsets cover ±2·half_width.
    pub half_width: f64,
    pub center: Option<f64>,
}

impl WignerGeometry {
    pub fn new(nx: usize, np: usize, half_width: f64) -> Self {
        Self { nx, np, half_width, center: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    pub nx: usize,
    pub np: usize,
    pub x0: f64,
    pub dx: f64,
    pub p0: f64,
    pub dp: f64,
    pub hbar: f64,
    /// Row-major: `values[i*np + j] = W(x_i, p_j)`.
    pub values: Vec<f64>,
    /// max |Im W| seen before discarding the imaginary part.
    pub imag_residue: f64,
}

impl PhaseSpaceGrid {
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p0 + j as f64 * self.dp
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.np + j]
    }

    /// Offset spacing conjugate to Δp.
    pub fn dy(&self) -> f64 {
        2.0 * PI * self.hbar / (self.np as f64 * self.dp)
    }

    pub fn y(&self, k: usize) -> f64 {
        (k as f64 - (self.np / 2) as f64) * self.dy()
    }

    /// ∬W dx dp: exact sum over p, trapezoid over x.
    pub fn integral(&self) -> f64 {
        (0..self.nx)
            .map(|i| {
                let row: f64 = (0..self.np).map(|j| self.get(i, j)).sum::<f64>() * self.dp;
                let w = if i == 0 || i + 1 == self.nx { 0.5 } else { 1.0 };
                w * row * self.dx
            })
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self) -> Result<()> {
        if self.nx < 2 || self.np < 2 || self.values.len() != self.nx * self.np {
            return Err(Error::InvalidParameter(format!(
                "grid {}x{} with {} values",
                self.nx,
                self.np,
                self.values.len()
            )));
        }
        if !(self.dx > 0.0 && self.dp > 0.0 && self.hbar > 0.0) {
            return Err(Error::InvalidParameter("grid spacings and hbar must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel samples `ρ(x_i + y_k/2, x_i − y_k/2)` in center/offset coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over (x, y).
    pub values: Vec<Complex64>,
}

impl SampledKernel {
    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.values[i * self.ys.len() + k]
    }

    /// The (x, y) arguments of entry (i, k) in the original kernel.
    pub fn arguments(&self, i: usize, k: usize) -> (f64, f64) {
        let (x, y) = (self.xs[i], self.ys[k]);
        (x + 0.5 * y, x - 0.5 * y)
    }

    /// max |ρ(a,b) − ρ(b,a)*| over mirrored offsets y ↔ −y.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.ys.len();
        let c = n / 2;
        let mut worst = 0.0_f64;
        for i in 0..self.xs.len() {
            for k in 1..n {
                let mirror = 2 * c - k;
                if mirror < n {
                    worst = worst.max((self.get(i, k) - self.get(i, mirror).conj()).norm());
                }
            }
        }
        worst
    }
}

fn centered_phase(n: usize, sign: f64) -> (Vec<Complex64>, Vec<Complex64>, Complex64) {
    // e^{∓2πi(j−c)(k−c)/n} = pre_j · post_k · e^{∓2πi jk/n} · e^{∓2πi c²/n}
    let c = (n / 2) as f64;
    let nf = n as f64;
    let twiddle = |t: f64| Complex64::from_polar(1.0, sign * 2.0 * PI * t / nf);
    let pre = (0..n).map(|j| twiddle(-(j as f64) * c)).collect();
    let post = (0..n).map(|k| twiddle(-(k as f64) * c)).collect();
    (pre, post, twiddle(c * c))
}

/// Samples ρ on the transform grid and applies the centered DFT per row.
pub fn wigner_forward(spec: &KernelSpec, geom: &WignerGeometry) -> Result<PhaseSpaceGrid> {
    let WignerGeometry { nx, np, half_width: l, .. } = *geom;
    if nx < 2 || np < 4 || np % 2 != 0 {
        return Err(Error::InvalidParameter(format!("need nx ≥ 2 and even np ≥ 4, got {nx}x{np}")));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("window must be positive, got {l}")));
    }
    let hbar = spec.hbar();
    let center = geom.center.unwrap_or_else(|| spec.envelope().0);
    let x0 = center - l;
    let dx = 2.0 * l / (nx - 1) as f64;
    let dy = 4.0 * l / np as f64;
    let dp = 2.0 * PI * hbar / (np as f64 * dy);
    let c = np / 2;
    let ys: Vec<f64> = (0..np).map(|k| (k as f64 - c as f64) * dy).collect();

    let rows: Vec<Vec<Complex64>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let x = x0 + i as f64 * dx;
            ys.iter().map(|&y| eval_kernel(spec, x + 0.5 * y, x - 0.5 * y)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let peak = rows.iter().flatten().fold(0.0_f64, |m, v| m.max(v.norm()));
    let mut edge = 0.0_f64;
    for (i, row) in rows.iter().enumerate() {
        edge = edge.max(row[0].norm()).max(row[np - 1].norm());
        if i == 0 || i + 1 == nx {
            edge = edge.max(row.iter().fold(0.0, |m, v| m.max(v.norm())));
        }
    }
    let ratio = edge / peak.max(f64::MIN_POSITIVE);
    if ratio > BOUNDARY_DECAY {
        // Gaussian tails: log ratio grows quadratically with the window
        let grow = ((BOUNDARY_DECAY.ln() / ratio.ln()).max(1.0)).sqrt() * 1.1;
        return Err(Error::WindowTooSmall { ratio, suggested: l * grow.max(1.25) });
    }

    let (pre, post, global) = centered_phase(np, -1.0);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(np);
    let norm = dy / (2.0 * PI * hbar);
    let out: Vec<(Vec<f64>, f64)> = rows
        .into_par_iter()
        .map(|row| {
            let mut buf: Vec<Complex64> = row.iter().zip(&post).map(|(v, t)| v * t).collect();
            fft.process(&mut buf);
            let mut im = 0.0_f64;
            let vals = buf
                .iter()
                .zip(&pre)
                .map(|(v, t)| {
                    let w = v * t * global * norm;
                    im = im.max(w.im.abs());
                    w.re
                })
                .collect();
            (vals, im)
        })
        .collect();
    let imag_residue = out.iter().fold(0.0_f64, |m, r| m.max(r.1));
    let values = out.into_iter().flat_map(|r| r.0).collect();
    Ok(PhaseSpaceGrid { nx, np, x0, dx, p0: -(c as f64) * dp, dp, hbar, values, imag_residue })
}

/// Kernel samples from W on the offset grid induced by the momentum grid.
pub fn wigner_inverse(w: &PhaseSpaceGrid) -> Result<SampledKernel> {
    w.check()?;
    let np = w.np;
    let c = np / 2;
    if (w.p0 + c as f64 * w.dp).abs() > 1e-9 * w.dp * np as f64 {
        return Err(Error::InvalidParameter("momentum grid is not centered on p = 0".into()));
    }
    let (pre, post, global) = centered_phase(np, 1.0);
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(np);
    let rows: Vec<Vec<Complex64>> = (0..w.nx)
        .into_par_iter()
        .map(|i| {
            let mut buf: Vec<Complex64> = (0..np).map(|j| post[j] * w.get(i, j)).collect();
            fft.process(&mut buf);
            buf.iter().zip(&pre).map(|(v, t)| v * t * global * w.dp).collect()
        })
        .collect();
    Ok(SampledKernel {
        xs: (0..w.nx).map(|i| w.x(i)).collect(),
        ys: (0..np).map(|k| w.y(k)).collect(),
        values: rows.into_iter().flatten().collect(),
    })
}

pub fn write_csv<W: Write>(grid: &PhaseSpaceGrid, mut out: W) -> Result<()> {
    writeln!(out, "# wigner-grid v{FORMAT_VERSION} hbar={:e}", grid.hbar)?;
    writeln!(out, "x,p,W")?;
    for i in 0..grid.nx {
        for j in 0..grid.np {
            writeln!(out, "{:e},{:e},{:e}", grid.x(i), grid.p(j), grid.get(i, j))?;
        }
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<PhaseSpaceGrid> {
    let mut hbar = None;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(h) = rest.split_whitespace().find_map(|t| t.strip_prefix("hbar=")) {
                hbar = Some(h.parse::<f64>().map_err(|_| Error::Config(format!("bad hbar '{h}'")))?);
            }
            continue;
        }
        if line.starts_with('x') {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad CSV field '{t}'"))))
            .collect::<Result<_>>()?;
        if f.len() != 3 {
            return Err(Error::Config(format!("expected 3 columns, got {}", f.len())));
        }
        rows.push((f[0], f[1], f[2]));
    }
    let hbar = hbar.ok_or_else(|| Error::Config("missing '# ... hbar=' header".into()))?;
    let np = rows.iter().take_while(|r| r.0 == rows[0].0).count();
    if np < 2 || rows.len() % np != 0 {
        return Err(Error::Config("CSV rows do not form a rectangular x-major grid".into()));
    }
    let nx = rows.len() / np;
    let grid = PhaseSpaceGrid {
        nx,
        np,
        x0: rows[0].0,
        dx: if nx > 1 { (rows[np * (nx - 1)].0 - rows[0].0) / (nx - 1) as f64 } else { 0.0 },
        p0: rows[0].1,
        dp: (rows[np - 1].1 - rows[0].1) / (np - 1) as f64,
        hbar,
        values: rows.iter().map(|r| r.2).collect(),
        imag_residue: 0.0,
    };
    grid.check()?;
    Ok(grid)
}

/// Layout: magic "KPWG", u32 version, u64 nx, u64 np, then f64 x0, dx, p0,
/// dp, hbar, then nx·np row-major f64 values; all little-endian.
pub fn write_binary<W: Write>(grid: &PhaseSpaceGrid, mut out: W) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(grid.nx as u64).to_le_bytes())?;
    out.write_all(&(grid.np as u64).to_le_bytes())?;
    for v in [grid.x0, grid.dx, grid.p0, grid.dp, grid.hbar] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &grid.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<PhaseSpaceGrid> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Config("not a Wigner grid file".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(Error::Config(format!("unsupported grid version {version}")));
    }
    let mut b8 = [0u8; 8];
    let mut u64_ = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let nx = u64_(&mut input)? as usize;
    let np = u64_(&mut input)? as usize;
    let mut f = [0.0; 5];
    for v in f.iter_mut() {
        *v = f64::from_bits(u64_(&mut input)?);
    }
    let count = nx.checked_mul(np).filter(|&n| n <= 1 << 28).ok_or_else(|| Error::Config("grid too large".into()))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_bits(u64_(&mut input)?));
    }
    let grid = PhaseSpaceGrid { nx, np, x0: f[0], dx: f[1], p0: f[2], dp: f[3], hbar: f[4], values, imag_residue: 0.0 };
    grid.check()?;
    Ok(grid)
}
