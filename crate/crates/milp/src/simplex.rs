//! Bounded-variable revised simplex with a dense product-form basis inverse.
//!
//! Rows are turned into equalities with one logical column each (`<=` gets a
//! nonnegative slack, `>=` a nonpositive one, `=` a slack fixed to zero), so
//! the all-logical basis is always available as a starting point. Phase 1
//! minimizes the sum of basic bound violations (composite method, no
//! artificial columns); phase 2 prices with incrementally-updated reduced
//! costs. Dantzig pricing with a Bland's-rule fallback guards against
//! cycling, and optimality is only declared after a fresh recomputation of
//! the reduced costs.
//!
//! The instance is reusable: branch-and-bound changes variable bounds and
//! re-solves from whatever basis the previous solve left behind, which keeps
//! per-node work to a handful of pivots.

use crate::model::{MilpModel, Sense, SolverError, VarKind};

pub const FEAS_TOL: f64 = 1e-7;
const DJ_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const ZERO_TOL: f64 = 1e-12;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGEN_LIMIT: usize = 300;
/// Phase-2 reduced costs are recomputed exactly every this many pivots.
const REFRESH_EVERY: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stat {
    Basic,
    AtLo,
    AtHi,
    /// Nonbasic free variable, held at zero.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped by the caller's deadline or iteration cap.
    Limit,
}

pub struct Simplex {
    m: usize,
    n: usize,
    ncols: usize,
    /// Sparse columns, structural then logical, as (row, coeff) pairs.
    cols: Vec<Vec<(u32, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,

    stat: Vec<Stat>,
    basic: Vec<u32>,
    xval: Vec<f64>,
    /// Dense basis inverse, column-major: `binv[c*m + r]` = B^-1[r, c].
    binv: Vec<f64>,
    dj: Vec<f64>,

    pub iterations: usize,
    degen_count: usize,
    bland: bool,

    // scratch buffers
    d: Vec<f64>,
    rho: Vec<f64>,
    work: Vec<f64>,
}

impl Simplex {
    /// Build a solver instance from a model. Binary variables are relaxed to
    /// their (possibly fixed) interval bounds.
    pub fn from_model(model: &MilpModel) -> Result<Simplex, SolverError> {
        let n = model.vars.len();
        let m = model.cons.len();
        let ncols = n + m;

        let mut lo = Vec::with_capacity(ncols);
        let mut hi = Vec::with_capacity(ncols);
        let mut cost = vec![0.0; ncols];
        for (i, v) in model.vars.iter().enumerate() {
            if v.lo > v.hi + ZERO_TOL {
                return Err(SolverError::Model(format!(
                    "variable '{}' has lo {} > hi {}",
                    v.name, v.lo, v.hi
                )));
            }
            if !v.lo.is_finite() && !v.lo.is_infinite() || v.lo.is_nan() || v.hi.is_nan() {
                return Err(SolverError::Model(format!("variable '{}' has NaN bound", v.name)));
            }
            lo.push(v.lo);
            hi.push(v.hi);
            cost[i] = v.obj;
        }

        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ncols];
        let mut rhs = Vec::with_capacity(m);
        for (i, con) in model.cons.iter().enumerate() {
            // merge duplicate variable references within the row
            let mut entries = con.coeffs.clone();
            entries.sort_by_key(|(v, _)| v.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (v, c) in entries {
                if v.0 >= n {
                    return Err(SolverError::Model(format!(
                        "constraint '{}' references unknown variable {}",
                        con.name, v.0
                    )));
                }
                match merged.last_mut() {
                    Some((lv, lc)) if *lv == v.0 => *lc += c,
                    _ => merged.push((v.0, c)),
                }
            }
            for (v, c) in merged {
                if c.is_nan() {
                    return Err(SolverError::Model(format!("NaN coefficient in '{}'", con.name)));
                }
                if c != 0.0 {
                    cols[v].push((i as u32, c));
                }
            }
            rhs.push(con.rhs);
            let (slo, shi) = match con.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(slo);
            hi.push(shi);
            cols[n + i].push((i as u32, 1.0));
        }
        // Binary kind is irrelevant here; branch-and-bound manages it via bounds.
        let _ = model.vars.iter().filter(|v| v.kind == VarKind::Binary);

        let mut s = Simplex {
            m,
            n,
            ncols,
            cols,
            lo,
            hi,
            cost,
            rhs,
            stat: vec![Stat::AtLo; ncols],
            basic: Vec::new(),
            xval: vec![0.0; ncols],
            binv: Vec::new(),
            dj: vec![0.0; ncols],
            iterations: 0,
            degen_count: 0,
            bland: false,
            d: vec![0.0; m],
            rho: vec![0.0; m],
            work: vec![0.0; m],
        };
        s.reset_basis();
        Ok(s)
    }

    pub fn num_structural(&self) -> usize {
        self.n
    }

    /// Start from the all-logical basis.
    pub fn reset_basis(&mut self) {
        let m = self.m;
        self.basic = (0..m).map(|i| (self.n + i) as u32).collect();
        for j in 0..self.ncols {
            self.stat[j] = Stat::AtLo;
        }
        for i in 0..m {
            self.stat[self.n + i] = Stat::Basic;
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        for j in 0..self.ncols {
            if self.stat[j] != Stat::Basic {
                self.snap_nonbasic(j);
            }
        }
    }

    /// Change a structural variable's bounds (used by branch-and-bound).
    pub fn set_col_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        debug_assert!(j < self.n);
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.stat[j] != Stat::Basic {
            self.snap_nonbasic(j);
        }
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    /// Structural part of the current point.
    pub fn values(&self) -> &[f64] {
        &self.xval[..self.n]
    }

    pub fn objective(&self) -> f64 {
        (0..self.ncols).map(|j| self.cost[j] * self.xval[j]).sum()
    }

    fn snap_nonbasic(&mut self, j: usize) {
        let (lo, hi) = (self.lo[j], self.hi[j]);
        self.stat[j] = if lo.is_finite() {
            Stat::AtLo
        } else if hi.is_finite() {
            Stat::AtHi
        } else {
            Stat::Free
        };
        // prefer staying on the current side when both bounds are finite
        if lo.is_finite() && hi.is_finite() && (self.xval[j] - hi).abs() < (self.xval[j] - lo).abs()
        {
            self.stat[j] = Stat::AtHi;
        }
        self.xval[j] = match self.stat[j] {
            Stat::AtLo => lo,
            Stat::AtHi => hi,
            _ => 0.0,
        };
    }

    fn binv_col(&self, c: usize) -> &[f64] {
        &self.binv[c * self.m..(c + 1) * self.m]
    }

    /// d = B^-1 * A_j via a sparse combination of B^-1 columns.
    fn ftran(&mut self, j: usize) {
        let m = self.m;
        self.d[..m].iter_mut().for_each(|x| *x = 0.0);
        for &(r, v) in &self.cols[j] {
            let col = &self.binv[r as usize * m..(r as usize + 1) * m];
            for i in 0..m {
                self.d[i] += v * col[i];
            }
        }
    }

    /// y = c_B^T B^-1 into `work`.
    fn btran(&mut self, cb: &[f64]) {
        let m = self.m;
        for c in 0..m {
            let col = &self.binv[c * m..(c + 1) * m];
            let mut acc = 0.0;
            for r in 0..m {
                acc += cb[r] * col[r];
            }
            self.work[c] = acc;
        }
    }

    fn price_into_dj(&mut self, phase1: bool) {
        // self.work holds y = c_B^T B^-1
        for j in 0..self.ncols {
            if self.stat[j] == Stat::Basic {
                self.dj[j] = 0.0;
                continue;
            }
            let cj = if phase1 { 0.0 } else { self.cost[j] };
            let mut acc = cj;
            for &(r, v) in &self.cols[j] {
                acc -= self.work[r as usize] * v;
            }
            self.dj[j] = acc;
        }
    }

    fn refresh_dj(&mut self, phase1: bool) {
        let m = self.m;
        let mut cb = vec![0.0; m];
        for i in 0..m {
            let b = self.basic[i] as usize;
            cb[i] = if phase1 {
                let x = self.xval[b];
                if x < self.lo[b] - FEAS_TOL {
                    -1.0
                } else if x > self.hi[b] + FEAS_TOL {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[b]
            };
        }
        self.btran(&cb);
        self.price_into_dj(phase1);
    }

    /// Recompute basic values from the nonbasic point: x_B = B^-1(b - N x_N).
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = self.rhs.clone();
        for j in 0..self.ncols {
            if self.stat[j] == Stat::Basic || self.xval[j] == 0.0 {
                continue;
            }
            let x = self.xval[j];
            for &(r, v) in &self.cols[j] {
                rhs[r as usize] -= v * x;
            }
        }
        let mut xb = vec![0.0; m];
        for c in 0..m {
            let f = rhs[c];
            if f == 0.0 {
                continue;
            }
            let col = &self.binv[c * m..(c + 1) * m];
            for r in 0..m {
                xb[r] += f * col[r];
            }
        }
        for i in 0..m {
            self.xval[self.basic[i] as usize] = xb[i];
        }
    }

    /// Rebuild B^-1 from scratch by Gauss-Jordan elimination with partial
    /// pivoting. Singular bases are repaired by restoring the row's logical.
    fn refactorize(&mut self) -> Result<(), SolverError> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m]; // column-major basis matrix
        for (i, &bj) in self.basic.iter().enumerate() {
            for &(r, v) in &self.cols[bj as usize] {
                bmat[i * m + r as usize] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        let mut perm: Vec<usize> = (0..m).collect(); // row permutation
        for k in 0..m {
            // pivot search in column k among rows k..m (in permuted order)
            let (mut best_r, mut best_v) = (k, 0.0f64);
            for r in k..m {
                let v = bmat[k * m + perm[r]].abs();
                if v > best_v {
                    best_v = v;
                    best_r = r;
                }
            }
            if best_v < 1e-11 {
                // basis repair: swap the offending basic for the row's logical
                let row = perm[k];
                let old = self.basic[k] as usize;
                self.stat[old] = Stat::AtLo;
                self.snap_nonbasic(old);
                let logical = self.n + row;
                if self.stat[logical] == Stat::Basic {
                    return Err(SolverError::Numerical(
                        "singular basis could not be repaired".into(),
                    ));
                }
                self.basic[k] = logical as u32;
                self.stat[logical] = Stat::Basic;
                return self.refactorize();
            }
            perm.swap(k, best_r);
            let prow = perm[k];
            let piv = bmat[k * m + prow];
            // scale pivot row (held implicitly: operate on rows of [B | I])
            for c in 0..m {
                bmat[c * m + prow] /= piv;
                inv[c * m + prow] /= piv;
            }
            for r in 0..m {
                if r == prow {
                    continue;
                }
                let f = bmat[k * m + r];
                if f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    bmat[c * m + r] -= f * bmat[c * m + prow];
                    inv[c * m + r] -= f * inv[c * m + prow];
                }
            }
        }
        // inv now holds B^-1 with rows permuted so that basic[k] matches pivot
        // order: row `perm[k]` of the eliminated system corresponds to basic k.
        // Reorder into binv so binv row index = structural row index.
        // After full Gauss-Jordan, bmat is a permutation: bmat[k*m + perm[k]] = 1.
        self.binv = vec![0.0; m * m];
        for c in 0..m {
            for k in 0..m {
                self.binv[c * m + k] = inv[c * m + perm[k]];
            }
        }
        Ok(())
    }

    fn total_infeasibility(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.m {
            let b = self.basic[i] as usize;
            let x = self.xval[b];
            if x < self.lo[b] - FEAS_TOL {
                s += self.lo[b] - x;
            } else if x > self.hi[b] + FEAS_TOL {
                s += x - self.hi[b];
            }
        }
        s
    }

    /// Pick the entering column given current `dj`. Returns (col, direction).
    fn choose_entering(&self, banned: &[usize]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for j in 0..self.ncols {
            if banned.contains(&j) {
                continue;
            }
            let dir = match self.stat[j] {
                Stat::Basic => continue,
                Stat::AtLo => {
                    if self.dj[j] < -DJ_TOL {
                        1.0
                    } else {
                        continue;
                    }
                }
                Stat::AtHi => {
                    if self.dj[j] > DJ_TOL {
                        -1.0
                    } else {
                        continue;
                    }
                }
                Stat::Free => {
                    if self.dj[j] < -DJ_TOL {
                        1.0
                    } else if self.dj[j] > DJ_TOL {
                        -1.0
                    } else {
                        continue;
                    }
                }
            };
            if self.bland {
                return Some((j, dir));
            }
            let score = self.dj[j].abs();
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Bounded-variable ratio test with composite phase-1 rules.
    /// Returns None when the step is unbounded.
    fn ratio_test(&self, q: usize, dir: f64) -> Option<RatioHit> {
        let mut t_best = f64::INFINITY;
        let mut hit: Option<RatioHit> = None;
        // entering variable's own range
        if self.lo[q].is_finite() && self.hi[q].is_finite() {
            t_best = self.hi[q] - self.lo[q];
            hit = Some(RatioHit::BoundFlip);
        }
        for i in 0..self.m {
            let di = self.d[i];
            if di.abs() <= 1e-11 {
                continue;
            }
            let b = self.basic[i] as usize;
            let x = self.xval[b];
            let delta = -dir * di; // rate of change of x_b per unit step
            let (lo, hi) = (self.lo[b], self.hi[b]);
            let below = x < lo - FEAS_TOL;
            let above = x > hi + FEAS_TOL;
            let (target, blocks) = if below {
                // infeasible low: blocks only while recovering toward lo
                if delta > 0.0 {
                    (lo, true)
                } else {
                    (f64::NAN, false)
                }
            } else if above {
                if delta < 0.0 {
                    (hi, true)
                } else {
                    (f64::NAN, false)
                }
            } else if delta > 0.0 {
                (hi, hi.is_finite())
            } else {
                (lo, lo.is_finite())
            };
            if !blocks {
                continue;
            }
            let t = ((target - x) / delta).max(0.0);
            let better = if self.bland {
                // Bland: strictly smaller t, or equal t with lower leaving index
                t < t_best - 1e-12
                    || (t <= t_best + 1e-12
                        && match hit {
                            Some(RatioHit::Pivot { row, .. }) => {
                                (self.basic[i] as usize) < self.basic[row] as usize
                            }
                            Some(RatioHit::BoundFlip) => t < t_best - 1e-12,
                            None => true,
                        })
            } else {
                // prefer the numerically largest pivot among near-ties
                t < t_best - 1e-9
                    || (t <= t_best + 1e-9
                        && match hit {
                            Some(RatioHit::Pivot { row, .. }) => di.abs() > self.d[row].abs(),
                            Some(RatioHit::BoundFlip) => false,
                            None => true,
                        })
            };
            if better {
                t_best = t;
                hit = Some(RatioHit::Pivot { row: i, target });
            }
        }
        hit.map(|h| match h {
            RatioHit::BoundFlip => RatioHit::Step {
                t: t_best,
                leave: None,
            },
            RatioHit::Pivot { row, target } => RatioHit::Step {
                t: t_best,
                leave: Some((row, target)),
            },
            s @ RatioHit::Step { .. } => s,
        })
    }

    /// Apply a pivot or bound flip. `rho`, `d` must be current for `q`.
    fn apply_step(&mut self, q: usize, dir: f64, t: f64, leave: Option<(usize, f64)>, phase1: bool) {
        let m = self.m;
        if t > 0.0 {
            for i in 0..m {
                let b = self.basic[i] as usize;
                self.xval[b] -= t * dir * self.d[i];
            }
            self.xval[q] += dir * t;
        }
        match leave {
            None => {
                // bound flip: q moves to its opposite bound
                self.stat[q] = if dir > 0.0 { Stat::AtHi } else { Stat::AtLo };
                self.xval[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            }
            Some((r, target)) => {
                let lv = self.basic[r] as usize;
                self.xval[lv] = target;
                self.stat[lv] = if target == self.lo[lv] {
                    Stat::AtLo
                } else {
                    Stat::AtHi
                };
                // rho = row r of B^-1 (before update), needed for dj update
                for c in 0..m {
                    self.rho[c] = self.binv[c * m + r];
                }
                // incremental phase-2 reduced-cost update
                if !phase1 {
                    let theta = self.dj[q] / self.d[r];
                    if theta != 0.0 {
                        for j in 0..self.ncols {
                            if self.stat[j] == Stat::Basic && j != lv {
                                continue;
                            }
                            let mut alpha = 0.0;
                            for &(rr, v) in &self.cols[j] {
                                let rc = self.rho[rr as usize];
                                if rc != 0.0 {
                                    alpha += rc * v;
                                }
                            }
                            if alpha != 0.0 {
                                self.dj[j] -= theta * alpha;
                            }
                        }
                    }
                    self.dj[q] = 0.0;
                }
                // eta update: B^-1 <- (I - g e_r^T) B^-1, g = (d - e_r)/d_r
                let piv = self.d[r];
                let mut g = self.d.clone();
                g[r] -= 1.0;
                for x in g.iter_mut() {
                    *x /= piv;
                }
                for c in 0..m {
                    let rc = self.rho[c];
                    if rc.abs() <= 1e-14 {
                        continue;
                    }
                    let col = &mut self.binv[c * m..(c + 1) * m];
                    for i in 0..m {
                        col[i] -= rc * g[i];
                    }
                }
                self.basic[r] = q as u32;
                self.stat[q] = Stat::Basic;
            }
        }
        if t <= 1e-10 {
            self.degen_count += 1;
            if self.degen_count > DEGEN_LIMIT {
                self.bland = true;
            }
        } else {
            self.degen_count = 0;
            self.bland = false;
        }
    }

    /// Solve from the current basis. `deadline` bounds wall time.
    pub fn solve(&mut self, deadline: Option<std::time::Instant>) -> Result<LpStatus, SolverError> {
        self.recompute_basics();
        let iter_limit = 200 * (self.m + self.n) + 20_000;
        let mut local_iters = 0usize;
        let mut refactored = false;
        self.bland = false;
        self.degen_count = 0;

        // ---- phase 1 ----
        loop {
            if self.total_infeasibility() <= FEAS_TOL {
                break;
            }
            local_iters += 1;
            self.iterations += 1;
            if local_iters > iter_limit {
                return Err(SolverError::Numerical("phase-1 iteration limit".into()));
            }
            if local_iters % 128 == 0 {
                if let Some(dl) = deadline {
                    if std::time::Instant::now() >= dl {
                        return Ok(LpStatus::Limit);
                    }
                }
            }
            self.refresh_dj(true);
            let mut banned: Vec<usize> = Vec::new();
            let step = loop {
                match self.choose_entering(&banned) {
                    None => break None,
                    Some((q, dir)) => {
                        self.ftran(q);
                        match self.ratio_test(q, dir) {
                            Some(RatioHit::Step { t, leave }) => {
                                if let Some((r, _)) = leave {
                                    if self.d[r].abs() < PIVOT_TOL && banned.len() < 16 {
                                        banned.push(q);
                                        continue;
                                    }
                                }
                                break Some((q, dir, t, leave));
                            }
                            _ => {
                                return Err(SolverError::Numerical(
                                    "unblocked phase-1 direction".into(),
                                ))
                            }
                        }
                    }
                }
            };
            match step {
                Some((q, dir, t, leave)) => self.apply_step(q, dir, t, leave, true),
                None => {
                    // phase-1 optimal but infeasible; verify on fresh factors once
                    if !refactored {
                        refactored = true;
                        self.refactorize()?;
                        self.recompute_basics();
                        continue;
                    }
                    return Ok(LpStatus::Infeasible);
                }
            }
        }

        // ---- phase 2 ----
        self.refresh_dj(false);
        let mut since_refresh = 0usize;
        loop {
            local_iters += 1;
            self.iterations += 1;
            if local_iters > iter_limit {
                return Err(SolverError::Numerical("phase-2 iteration limit".into()));
            }
            if local_iters % 128 == 0 {
                if let Some(dl) = deadline {
                    if std::time::Instant::now() >= dl {
                        return Ok(LpStatus::Limit);
                    }
                }
                // guard against drift reintroducing infeasibility
                if self.total_infeasibility() > FEAS_TOL * 10.0 {
                    self.refactorize()?;
                    self.recompute_basics();
                    if self.total_infeasibility() > FEAS_TOL {
                        return self.solve(deadline);
                    }
                    self.refresh_dj(false);
                }
            }
            if since_refresh >= REFRESH_EVERY {
                self.refresh_dj(false);
                since_refresh = 0;
            }
            let mut banned: Vec<usize> = Vec::new();
            let step = loop {
                match self.choose_entering(&banned) {
                    None => break None,
                    Some((q, dir)) => {
                        self.ftran(q);
                        match self.ratio_test(q, dir) {
                            Some(RatioHit::Step { t, leave }) => {
                                if let Some((r, _)) = leave {
                                    if self.d[r].abs() < PIVOT_TOL && banned.len() < 16 {
                                        banned.push(q);
                                        continue;
                                    }
                                }
                                break Some((q, dir, t, leave));
                            }
                            _ => break Some((q, dir, f64::INFINITY, None)),
                        }
                    }
                }
            };
            match step {
                None => {
                    // candidate optimum: confirm with exact reduced costs
                    self.refresh_dj(false);
                    since_refresh = 0;
                    if self.choose_entering(&[]).is_none() {
                        self.recompute_basics();
                        if self.total_infeasibility() > FEAS_TOL {
                            if refactored {
                                return Err(SolverError::Numerical(
                                    "optimal basis lost feasibility".into(),
                                ));
                            }
                            refactored = true;
                            self.refactorize()?;
                            return self.solve(deadline);
                        }
                        return Ok(LpStatus::Optimal);
                    }
                }
                Some((_, _, t, None)) if t.is_infinite() => return Ok(LpStatus::Unbounded),
                Some((q, dir, t, leave)) => {
                    self.apply_step(q, dir, t, leave, false);
                    since_refresh += 1;
                }
            }
        }
    }
}

enum RatioHit {
    BoundFlip,
    Pivot { row: usize, target: f64 },
    Step { t: f64, leave: Option<(usize, f64)> },
}
