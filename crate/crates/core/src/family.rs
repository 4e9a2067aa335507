//! The conditionally structured Gaussian family.
//!
//! `q(θ) = q(θG) q(θL | θG)` with
//!
//! ```text
//! θG ~ N(μ1, (C1 C1ᵀ)⁻¹)
//! θL | θG ~ N(μ2, (C2 C2ᵀ)⁻¹)
//! μ2 = d + C2⁻ᵀ D (μ1 − θG),   vech(C2*) = f + F θG
//! ```
//!
//! `C2*` lives on a block-banded [`IndexMap`], so positions forced to zero by
//! conditional independence are never stored. Every gradient below is computed
//! with triangular solves and pattern-restricted outer products; no Jacobian
//! or Kronecker matrix is formed.
//!
//! The parameter vector λ is one flat buffer laid out as
//! `[μ1, vech(C1*), d, D (row-major nL×G), f, F (row-major P×G)]`.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dstar_scale_in_place, factor_to_star, pattern_outer_vech, star_to_factor, IndexMap, LowerTri,
};

/// Dimensions of the variational family: `G` globals and `n` local blocks of
/// size `L` with Markov bandwidth `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyDims {
    #[serde(rename = "G")]
    pub g: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub ell: usize,
}

impl FamilyDims {
    pub fn new(g: usize, n: usize, l: usize, ell: usize) -> Self {
        Self { g, n, l, ell }
    }

    pub fn local_dim(&self) -> usize {
        self.n * self.l
    }

    pub fn theta_dim(&self) -> usize {
        self.g + self.local_dim()
    }
}

/// Offsets of the six λ blocks inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    g: usize,
    nl: usize,
    pg: usize,
    p: usize,
}

impl Layout {
    fn new(g: usize, nl: usize, p: usize) -> Self {
        Self {
            g,
            nl,
            pg: g * (g + 1) / 2,
            p,
        }
    }

    pub fn mu1(&self) -> Range<usize> {
        0..self.g
    }
    pub fn c1star(&self) -> Range<usize> {
        let s = self.g;
        s..s + self.pg
    }
    pub fn d(&self) -> Range<usize> {
        let s = self.g + self.pg;
        s..s + self.nl
    }
    pub fn dmat(&self) -> Range<usize> {
        let s = self.g + self.pg + self.nl;
        s..s + self.nl * self.g
    }
    pub fn f(&self) -> Range<usize> {
        let s = self.dmat().end;
        s..s + self.p
    }
    pub fn fmat(&self) -> Range<usize> {
        let s = self.f().end;
        s..s + self.p * self.g
    }
    pub fn len(&self) -> usize {
        self.fmat().end
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Block accessors shared by λ and its gradient.
pub trait LambdaBlocks {
    fn layout(&self) -> Layout;
    fn values(&self) -> &[f64];

    fn mu1(&self) -> &[f64] {
        &self.values()[self.layout().mu1()]
    }
    fn c1star(&self) -> &[f64] {
        &self.values()[self.layout().c1star()]
    }
    fn d(&self) -> &[f64] {
        &self.values()[self.layout().d()]
    }
    /// `D`, row-major `nL × G`.
    fn dmat(&self) -> &[f64] {
        &self.values()[self.layout().dmat()]
    }
    fn f(&self) -> &[f64] {
        &self.values()[self.layout().f()]
    }
    /// `F`, row-major `P × G` with rows in pattern order.
    fn fmat(&self) -> &[f64] {
        &self.values()[self.layout().fmat()]
    }
}

/// Variational parameters λ.
///
/// With `gaussian_mode` set the family is the jointly Gaussian special case:
/// `F` is held at zero and receives no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    dims: FamilyDims,
    global_map: Arc<IndexMap>,
    local_map: Arc<IndexMap>,
    layout: Layout,
    values: Vec<f64>,
    gaussian_mode: bool,
}

impl LambdaBlocks for VariationalParams {
    fn layout(&self) -> Layout {
        self.layout
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One reparametrized sample `θ = r_λ(s)` with the conditional quantities
/// that every downstream gradient reuses.
#[derive(Debug, Clone)]
pub struct Draw {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub theta_g: Vec<f64>,
    pub theta_l: Vec<f64>,
    pub c1: LowerTri,
    pub c2: LowerTri,
    pub mu2: Vec<f64>,
}

impl Draw {
    /// `θ = (θG, θL)`.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.theta_g.clone();
        t.extend_from_slice(&self.theta_l);
        t
    }

    /// `s = (s1, s2)`.
    pub fn s(&self) -> Vec<f64> {
        let mut s = self.s1.clone();
        s.extend_from_slice(&self.s2);
        s
    }
}

/// A vector shaped like λ, typically a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGradient {
    layout: Layout,
    values: Vec<f64>,
}

impl LambdaBlocks for LambdaGradient {
    fn layout(&self) -> Layout {
        self.layout
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl LambdaGradient {
    pub fn zeros_like(lambda: &VariationalParams) -> Self {
        Self {
            layout: lambda.layout,
            values: vec![0.0; lambda.layout.len()],
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &LambdaGradient) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        for v in &mut self.values {
            *v *= scale;
        }
        self
    }

    pub fn sub(&self, other: &LambdaGradient) -> LambdaGradient {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            layout: self.layout,
            values,
        }
    }
}

impl VariationalParams {
    /// λ = 0: standard normal `q` (identity factors, zero means and couplings).
    pub fn zeros(dims: FamilyDims, gaussian_mode: bool) -> Result<Self> {
        let global_map = Arc::new(IndexMap::dense(dims.g)?);
        let local_map = Arc::new(IndexMap::banded(dims.n, dims.l, dims.ell)?);
        let layout = Layout::new(dims.g, dims.local_dim(), local_map.len());
        Ok(Self {
            dims,
            global_map,
            local_map,
            layout,
            values: vec![0.0; layout.len()],
            gaussian_mode,
        })
    }

    /// Builds λ from a flat buffer in the layout order.
    pub fn from_values(dims: FamilyDims, values: Vec<f64>, gaussian_mode: bool) -> Result<Self> {
        let mut lambda = Self::zeros(dims, gaussian_mode)?;
        lambda.set_values(values)?;
        Ok(lambda)
    }

    /// Same structure, new flat values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.set_values(values)?;
        Ok(out)
    }

    fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.layout.len() {
            return Err(Error::invalid(format!(
                "λ buffer has {} entries, expected {}",
                values.len(),
                self.layout.len()
            )));
        }
        if self.gaussian_mode && values[self.layout.fmat()].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("F must be zero in gaussian mode"));
        }
        self.values = values;
        Ok(())
    }

    pub fn dims(&self) -> FamilyDims {
        self.dims
    }

    pub fn gaussian_mode(&self) -> bool {
        self.gaussian_mode
    }

    /// Switches between the Gaussian special case and the full family.
    /// Entering gaussian mode requires `F = 0`.
    pub fn set_gaussian_mode(&mut self, on: bool) -> Result<()> {
        if on && self.fmat().iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("cannot enter gaussian mode with F ≠ 0"));
        }
        self.gaussian_mode = on;
        Ok(())
    }

    pub fn global_map(&self) -> &Arc<IndexMap> {
        &self.global_map
    }

    pub fn local_map(&self) -> &Arc<IndexMap> {
        &self.local_map
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `C1 = star(C1*)`.
    pub fn c1_factor(&self) -> LowerTri {
        let cstar = LowerTri::new(self.global_map.clone(), self.c1star().to_vec())
            .expect("layout guarantees the global pattern size");
        star_to_factor(&cstar)
    }

    /// `vech(C2*) = f + F θG` on the pattern.
    pub fn conditional_star(&self, theta_g: &[f64]) -> Vec<f64> {
        let g = self.dims.g;
        let mut out = self.f().to_vec();
        if !self.gaussian_mode {
            for (row, o) in self.fmat().chunks_exact(g).zip(out.iter_mut()) {
                *o += dot(row, theta_g);
            }
        }
        out
    }

    /// `C2 = star(f + F θG)`.
    pub fn conditional_factor(&self, theta_g: &[f64]) -> LowerTri {
        let cstar = LowerTri::new(self.local_map.clone(), self.conditional_star(theta_g))
            .expect("layout guarantees the local pattern size");
        star_to_factor(&cstar)
    }

    /// `(μ2, C2)` at `θG`, with `μ2 = d − C2⁻ᵀ D (θG − μ1)`.
    pub fn conditional_params(&self, theta_g: &[f64]) -> Result<(Vec<f64>, LowerTri)> {
        self.check_len("θG", theta_g.len(), self.dims.g)?;
        self.check_finite()?;
        let c2 = self.conditional_factor(theta_g);
        let z1: Vec<f64> = theta_g.iter().zip(self.mu1()).map(|(t, m)| t - m).collect();
        let shift = c2.solve_upper_transpose(&self.mul_dmat(&z1))?;
        let mu2 = self.d().iter().zip(&shift).map(|(d, v)| d - v).collect();
        Ok((mu2, c2))
    }

    /// The reparametrization `θ = r_λ(s)`.
    pub fn reparam(&self, s: &[f64]) -> Result<Draw> {
        let g = self.dims.g;
        self.check_len("s", s.len(), self.dims.theta_dim())?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("standard normal draw".into()));
        }
        self.check_finite()?;
        let (s1, s2) = s.split_at(g);
        let c1 = self.c1_factor();
        let z1 = c1.solve_upper_transpose(s1)?;
        let theta_g: Vec<f64> = self.mu1().iter().zip(&z1).map(|(m, z)| m + z).collect();
        let c2 = self.conditional_factor(&theta_g);
        let shift = c2.solve_upper_transpose(&self.mul_dmat(&z1))?;
        let noise = c2.solve_upper_transpose(s2)?;
        let mu2: Vec<f64> = self.d().iter().zip(&shift).map(|(d, v)| d - v).collect();
        let theta_l: Vec<f64> = mu2.iter().zip(&noise).map(|(m, u)| m + u).collect();
        let draw = Draw {
            s1: s1.to_vec(),
            s2: s2.to_vec(),
            theta_g,
            theta_l,
            c1,
            c2,
            mu2,
        };
        draw.check_finite()?;
        Ok(draw)
    }

    /// Recovers `s` from `θ`: `s1 = C1ᵀ(θG − μ1)`, then `s2 = C2ᵀ(θL − μ2)`.
    pub fn inverse_reparam(&self, theta: &[f64]) -> Result<Draw> {
        let g = self.dims.g;
        self.check_len("θ", theta.len(), self.dims.theta_dim())?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("θ".into()));
        }
        self.check_finite()?;
        let (theta_g, theta_l) = theta.split_at(g);
        let c1 = self.c1_factor();
        c1.check_factor()?;
        let z1: Vec<f64> = theta_g.iter().zip(self.mu1()).map(|(t, m)| t - m).collect();
        let s1 = c1.mul_upper_transpose(&z1)?;
        let c2 = self.conditional_factor(theta_g);
        let shift = c2.solve_upper_transpose(&self.mul_dmat(&z1))?;
        let mu2: Vec<f64> = self.d().iter().zip(&shift).map(|(d, v)| d - v).collect();
        let resid: Vec<f64> = theta_l.iter().zip(&mu2).map(|(t, m)| t - m).collect();
        let s2 = c2.mul_upper_transpose(&resid)?;
        let draw = Draw {
            s1,
            s2,
            theta_g: theta_g.to_vec(),
            theta_l: theta_l.to_vec(),
            c1,
            c2,
            mu2,
        };
        draw.check_finite()?;
        Ok(draw)
    }

    /// `log q_λ(θ) = −((nL+G)/2) log 2π + log|C1 C2| − sᵀs / 2`.
    pub fn log_density(&self, draw: &Draw) -> f64 {
        let dim = self.dims.theta_dim() as f64;
        -0.5 * dim * (2.0 * PI).ln() + draw.c1.log_det() + draw.c2.log_det()
            - 0.5 * (dot(&draw.s1, &draw.s1) + dot(&draw.s2, &draw.s2))
    }

    /// `∇_θ log q_λ(θ)` as `(∇_θG, ∇_θL)` concatenated.
    pub fn grad_theta_log_density(&self, draw: &Draw) -> Result<Vec<f64>> {
        let g = self.dims.g;
        let mut grad_g = draw.c1.mul_lower(&draw.s1)?;
        let dt_s2 = self.mul_dmat_transpose(&draw.s2);
        for (o, v) in grad_g.iter_mut().zip(&dt_s2) {
            *o = -*o - v;
        }
        if !self.gaussian_mode {
            let tl = self.centered_local(draw);
            let mut inner = pattern_outer_vech(&tl, &draw.s2, &self.local_map)?;
            dstar_scale_in_place(&draw.c2, &mut inner);
            inner.iter_mut().for_each(|v| *v = -*v);
            add_identity(&self.local_map, &mut inner);
            for (row, w) in self.fmat().chunks_exact(g).zip(&inner) {
                for (o, fr) in grad_g.iter_mut().zip(row) {
                    *o += fr * w;
                }
            }
        }
        let grad_l = draw.c2.mul_lower(&draw.s2)?;
        grad_g.extend(grad_l.into_iter().map(|v| -v));
        Ok(grad_g)
    }

    /// `∇_λ r_λ(s) (g1, g2)`: the action of the reparametrization Jacobian on
    /// a θ-gradient.
    pub fn apply_jacobian(&self, draw: &Draw, g1: &[f64], g2: &[f64]) -> Result<LambdaGradient> {
        let g = self.dims.g;
        self.check_len("g1", g1.len(), g)?;
        self.check_len("g2", g2.len(), self.dims.local_dim())?;
        let layout = self.layout;
        let mut out = LambdaGradient::zeros_like(self);

        let z1: Vec<f64> = draw.theta_g.iter().zip(self.mu1()).map(|(t, m)| t - m).collect();
        let tl = self.centered_local(draw);
        debug_assert!({
            let w: Vec<f64> = draw
                .s2
                .iter()
                .zip(self.mul_dmat(&z1))
                .map(|(s, v)| s - v)
                .collect();
            let direct = draw.c2.solve_upper_transpose(&w)?;
            direct
                .iter()
                .zip(&tl)
                .all(|(a, b)| (a - b).abs() <= 1e-8 * (1.0 + a.abs()))
        });
        let u2 = draw.c2.solve_lower(g2)?;

        // f-block: −D2* vech{(θL − d) u2ᵀ}
        let mut f_block = pattern_outer_vech(&tl, &u2, &self.local_map)?;
        dstar_scale_in_place(&draw.c2, &mut f_block);
        f_block.iter_mut().for_each(|v| *v = -*v);

        // ∇_{μ1} θL · g2 = Fᵀ (f-block)
        let mut through_scale = vec![0.0; g];
        if !self.gaussian_mode {
            for (row, w) in self.fmat().chunks_exact(g).zip(&f_block) {
                for (o, fr) in through_scale.iter_mut().zip(row) {
                    *o += fr * w;
                }
            }
            let fm = &mut out.values[layout.fmat()];
            for (row, w) in fm.chunks_exact_mut(g).zip(&f_block) {
                for (o, t) in row.iter_mut().zip(&draw.theta_g) {
                    *o = w * t;
                }
            }
        }

        for ((o, a), b) in out.values[layout.mu1()]
            .iter_mut()
            .zip(g1)
            .zip(&through_scale)
        {
            *o = a + b;
        }
        out.values[layout.d()].copy_from_slice(g2);
        for (row, u) in out.values[layout.dmat()].chunks_exact_mut(g).zip(&u2) {
            for (o, z) in row.iter_mut().zip(&z1) {
                *o = -u * z;
            }
        }

        // C1*-block: −D1* vech{z1 (C1⁻¹ h)ᵀ}, h = g1 + ∇_{μ1}θL g2 − Dᵀ u2
        let dt_u2 = self.mul_dmat_transpose(&u2);
        let h: Vec<f64> = g1
            .iter()
            .zip(&through_scale)
            .zip(&dt_u2)
            .map(|((a, b), c)| a + b - c)
            .collect();
        let v1 = draw.c1.solve_lower(&h)?;
        let mut c1_block = pattern_outer_vech(&z1, &v1, &self.global_map)?;
        dstar_scale_in_place(&draw.c1, &mut c1_block);
        for (o, v) in out.values[layout.c1star()].iter_mut().zip(&c1_block) {
            *o = -v;
        }

        out.values[layout.f()].copy_from_slice(&f_block);
        Ok(out)
    }

    /// The direct score `∇_λ log q_λ(θ)` with θ held fixed.
    pub fn score(&self, draw: &Draw) -> Result<LambdaGradient> {
        let g = self.dims.g;
        let layout = self.layout;
        let mut out = LambdaGradient::zeros_like(self);
        let z1: Vec<f64> = draw.theta_g.iter().zip(self.mu1()).map(|(t, m)| t - m).collect();
        let tl = self.centered_local(draw);

        let c1s1 = draw.c1.mul_lower(&draw.s1)?;
        let dts2 = self.mul_dmat_transpose(&draw.s2);
        for ((o, a), b) in out.values[layout.mu1()].iter_mut().zip(&c1s1).zip(&dts2) {
            *o = a + b;
        }

        let mut c1_block = pattern_outer_vech(&z1, &draw.s1, &self.global_map)?;
        dstar_scale_in_place(&draw.c1, &mut c1_block);
        c1_block.iter_mut().for_each(|v| *v = -*v);
        add_identity(&self.global_map, &mut c1_block);
        out.values[layout.c1star()].copy_from_slice(&c1_block);

        let c2s2 = draw.c2.mul_lower(&draw.s2)?;
        out.values[layout.d()].copy_from_slice(&c2s2);
        for (row, s) in out.values[layout.dmat()].chunks_exact_mut(g).zip(&draw.s2) {
            for (o, z) in row.iter_mut().zip(&z1) {
                *o = -s * z;
            }
        }

        let mut f_block = pattern_outer_vech(&tl, &draw.s2, &self.local_map)?;
        dstar_scale_in_place(&draw.c2, &mut f_block);
        f_block.iter_mut().for_each(|v| *v = -*v);
        add_identity(&self.local_map, &mut f_block);
        if !self.gaussian_mode {
            let fm = &mut out.values[layout.fmat()];
            for (row, w) in fm.chunks_exact_mut(g).zip(&f_block) {
                for (o, t) in row.iter_mut().zip(&draw.theta_g) {
                    *o = w * t;
                }
            }
        }
        out.values[layout.f()].copy_from_slice(&f_block);
        Ok(out)
    }

    /// Maps a Gaussian approximation `N([μL; μG], T⁻ᵀT⁻¹)` with
    /// `T = [[TLL, 0], [TGL, TGG]]` onto the family (`μ1 = μG`, `d = μL`,
    /// `C1 = TGG`, `C2 = TLL`, `D = TGLᵀ`, `F = 0`).
    ///
    /// `t_gl` is row-major `G × nL`. The result has gaussian mode off, so a
    /// subsequent fit may move `F`.
    pub fn from_gva(
        dims: FamilyDims,
        mu_g: &[f64],
        mu_l: &[f64],
        t_gg: &LowerTri,
        t_gl: &[f64],
        t_ll: &LowerTri,
    ) -> Result<Self> {
        let mut lambda = Self::zeros(dims, false)?;
        let (g, nl) = (dims.g, dims.local_dim());
        if mu_g.len() != g || mu_l.len() != nl || t_gl.len() != g * nl {
            return Err(Error::invalid("GVA parameter shapes do not match the family"));
        }
        if **t_gg.map() != *lambda.global_map {
            return Err(Error::invalid("TGG is not a dense G × G lower triangle"));
        }
        if **t_ll.map() != *lambda.local_map {
            return Err(Error::invalid("TLL pattern does not match the family pattern"));
        }
        let layout = lambda.layout;
        let c1star = factor_to_star(t_gg)?;
        let f = factor_to_star(t_ll)?;
        lambda.values[layout.mu1()].copy_from_slice(mu_g);
        lambda.values[layout.c1star()].copy_from_slice(c1star.values());
        lambda.values[layout.d()].copy_from_slice(mu_l);
        let dm = &mut lambda.values[layout.dmat()];
        for a in 0..nl {
            for b in 0..g {
                dm[a * g + b] = t_gl[b * nl + a];
            }
        }
        lambda.values[layout.f()].copy_from_slice(f.values());
        Ok(lambda)
    }

    /// `θL − d`, which equals `C2⁻ᵀ(s2 − D C1⁻ᵀ s1)`.
    fn centered_local(&self, draw: &Draw) -> Vec<f64> {
        draw.theta_l.iter().zip(self.d()).map(|(t, d)| t - d).collect()
    }

    /// `D x` for `x` of length G.
    fn mul_dmat(&self, x: &[f64]) -> Vec<f64> {
        self.dmat().chunks_exact(self.dims.g).map(|row| dot(row, x)).collect()
    }

    /// `Dᵀ y` for `y` of length nL.
    fn mul_dmat_transpose(&self, y: &[f64]) -> Vec<f64> {
        let g = self.dims.g;
        let mut out = vec![0.0; g];
        for (row, w) in self.dmat().chunks_exact(g).zip(y) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += r * w;
            }
        }
        out
    }

    fn check_len(&self, what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::invalid(format!(
                "{what} has length {got}, expected {want}"
            )));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite("variational parameters".into()));
        }
        Ok(())
    }
}

impl Draw {
    fn check_finite(&self) -> Result<()> {
        let all = self
            .theta_g
            .iter()
            .chain(&self.theta_l)
            .chain(&self.s1)
            .chain(&self.s2);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reparametrized draw".into()));
        }
        Ok(())
    }
}

/// Adds `vech(I)` to a pattern vector.
fn add_identity(map: &IndexMap, v: &mut [f64]) {
    for i in 0..map.dim() {
        v[map.diag_offset(i)] += 1.0;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// On-disk form of λ: named blocks plus the pattern descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaFile {
    pub pattern: FamilyDims,
    pub gaussian_mode: bool,
    pub mu1: Vec<f64>,
    pub c1star_vech: Vec<f64>,
    pub d: Vec<f64>,
    #[serde(rename = "D_rowmajor")]
    pub d_rowmajor: Vec<f64>,
    pub f_pattern: Vec<f64>,
    #[serde(rename = "F_rowmajor")]
    pub f_rowmajor: Vec<f64>,
}

impl From<&VariationalParams> for LambdaFile {
    fn from(l: &VariationalParams) -> Self {
        Self {
            pattern: l.dims,
            gaussian_mode: l.gaussian_mode,
            mu1: l.mu1().to_vec(),
            c1star_vech: l.c1star().to_vec(),
            d: l.d().to_vec(),
            d_rowmajor: l.dmat().to_vec(),
            f_pattern: l.f().to_vec(),
            f_rowmajor: l.fmat().to_vec(),
        }
    }
}

impl TryFrom<LambdaFile> for VariationalParams {
    type Error = Error;

    fn try_from(file: LambdaFile) -> Result<Self> {
        let mut values = file.mu1;
        values.extend(file.c1star_vech);
        values.extend(file.d);
        values.extend(file.d_rowmajor);
        values.extend(file.f_pattern);
        values.extend(file.f_rowmajor);
        Self::from_values(file.pattern, values, file.gaussian_mode)
    }
}

impl Serialize for VariationalParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LambdaFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for VariationalParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = LambdaFile::deserialize(d)?;
        VariationalParams::try_from(file).map_err(serde::de::Error::custom)
    }
}
