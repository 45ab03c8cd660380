//! Fully observable pursuit MDP and its value table.
//!
//! State is the pair `(d, u)` with `d = X_ag - x` the minimum-image displacement
//! from target to agent and `u` the target velocity. In one step the agent moves
//! by `a`, the target by its current `u`, so `d' = wrap(d + a - u)`; reaching
//! `|d'| <= sqrt(2)` pays 1 and ends the episode, otherwise the velocity is
//! redrawn from `P(. | u)` and future rewards are discounted by `gamma`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{within_capture, Action, Displacement, GridSpec, Symmetry, CAPTURE_RADIUS};
use crate::target::{Alphabet, TransitionMatrix};

/// Discount factor for the greedy drive.
pub const DEFAULT_GAMMA: f64 = 0.95;
/// Sup-norm Bellman residual at which value iteration stops.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const MAX_SWEEPS: usize = 100_000;

const MAGIC: &[u8; 4] = b"PQTB";
const FORMAT_VERSION: u32 = 1;
const CAPTURED: u32 = u32::MAX;

/// `Q[d][u][a]`, stored as `values[(u * L^2 + d) * 4 + a]` with `d` a
/// [`GridSpec::displacement_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    side: usize,
    alphabet: Alphabet,
    gamma: f64,
    matrix_digest: [u8; 32],
    residual: f64,
    sweeps: usize,
    values: Vec<f64>,
}

/// Convergence history of one value-iteration run.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationReport {
    /// Sup-norm change of `V` after every sweep.
    pub residuals: Vec<f64>,
}

impl QTable {
    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn matrix_digest(&self) -> [u8; 32] {
        self.matrix_digest
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// The four action values at `(d, u)`, `d` given as a displacement index.
    #[inline]
    pub fn row(&self, d_index: usize, u: usize) -> &[f64] {
        let k = (u * self.side * self.side + d_index) * 4;
        &self.values[k..k + 4]
    }

    pub fn q(&self, grid: &GridSpec, d: Displacement, u: usize, a: Action) -> f64 {
        self.row(grid.displacement_index(d), u)[a.index()]
    }

    pub fn value(&self, grid: &GridSpec, d: Displacement, u: usize) -> f64 {
        self.row(grid.displacement_index(d), u).iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Largest violation of `Q(g d, g u, g a) = Q(d, u, a)` over the symmetry group.
    pub fn equivariance_error(&self, grid: &GridSpec) -> f64 {
        let mut worst = 0.0_f64;
        for s in Symmetry::ALL {
            let perm = self.alphabet.permutation(&s);
            for (k, d) in grid.displacements().enumerate() {
                let kg = grid.displacement_index(s.apply_displacement(d));
                for (u, &ug) in perm.iter().enumerate() {
                    for a in Action::ALL {
                        let lhs = self.row(kg, ug)[s.apply_action(a).index()];
                        let rhs = self.row(k, u)[a.index()];
                        worst = worst.max((lhs - rhs).abs());
                    }
                }
            }
        }
        worst
    }

    /// CSV with one row per `(d, u, a)`.
    pub fn to_csv(&self, grid: &GridSpec) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("di,dj,ui,uj,action,q\n");
        for u in 0..self.alphabet.len() {
            let (ui, uj) = self.alphabet.velocity(u);
            for (k, d) in grid.displacements().enumerate() {
                let row = self.row(k, u);
                for a in Action::ALL {
                    let (ai, aj) = a.offset();
                    let _ = writeln!(out, "{},{},{ui},{uj},{ai}:{aj},{:.17e}", d.di, d.dj, row[a.index()]);
                }
            }
        }
        out
    }

    fn gamma_text(gamma: f64) -> String {
        format!("{gamma}")
    }

    /// Binary cache layout, little endian:
    /// magic, version, side, alphabet size, gamma as a length-prefixed decimal
    /// string, transition-matrix digest, residual, sweeps, value count, values,
    /// then a SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * 8 + 128);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.side as u32).to_le_bytes());
        out.extend_from_slice(&(self.alphabet.len() as u32).to_le_bytes());
        let g = Self::gamma_text(self.gamma);
        out.extend_from_slice(&(g.len() as u32).to_le_bytes());
        out.extend_from_slice(g.as_bytes());
        out.extend_from_slice(&self.matrix_digest);
        out.extend_from_slice(&self.residual.to_le_bytes());
        out.extend_from_slice(&(self.sweeps as u64).to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let sum: [u8; 32] = Sha256::digest(&out).into();
        out.extend_from_slice(&sum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("value table: {m}"));
        if bytes.len() < 32 + 4 {
            return Err(bad("truncated"));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        let want: [u8; 32] = Sha256::digest(body).into();
        if want.as_slice() != sum {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        if r.u32()? != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let side = r.u32()? as usize;
        let n = r.u32()? as usize;
        let alphabet = Alphabet::from_len(n).ok_or_else(|| bad("unknown alphabet"))?;
        let glen = r.u32()? as usize;
        let gamma: f64 = std::str::from_utf8(r.take(glen)?)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad discount"))?;
        let mut matrix_digest = [0u8; 32];
        matrix_digest.copy_from_slice(r.take(32)?);
        let residual = r.f64()?;
        let sweeps = r.u64()? as usize;
        let count = r.u64()? as usize;
        if count != side * side * n * 4 {
            return Err(bad("value count does not match the header"));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(r.f64()?);
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            side,
            alphabet,
            gamma,
            matrix_digest,
            residual,
            sweeps,
            values,
        })
    }

    /// Whether this table was built for the given problem.
    pub fn matches(&self, p: &TransitionMatrix, grid: &GridSpec, gamma: f64) -> bool {
        self.side == grid.side()
            && self.alphabet == p.alphabet()
            && Self::gamma_text(self.gamma) == Self::gamma_text(gamma)
            && self.matrix_digest == p.digest()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("value table: truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Successor displacement index for every `(u, d, a)`, or [`CAPTURED`].
fn successor_table(alphabet: Alphabet, grid: &GridSpec) -> Vec<u32> {
    let c = grid.cells();
    let mut next = vec![0u32; alphabet.len() * c * 4];
    for u in 0..alphabet.len() {
        let (ui, uj) = alphabet.velocity(u);
        for (k, d) in grid.displacements().enumerate() {
            for a in Action::ALL {
                let (ai, aj) = a.offset();
                let d2 = grid.wrap_displacement(d.di + ai - ui, d.dj + aj - uj);
                next[(u * c + k) * 4 + a.index()] = if within_capture(d2, CAPTURE_RADIUS, 1.0) {
                    CAPTURED
                } else {
                    grid.displacement_index(d2) as u32
                };
            }
        }
    }
    next
}

/// Value iteration with Jacobi sweeps from `V = 0`.
pub fn value_iteration(p: &TransitionMatrix, grid: &GridSpec, gamma: f64, tol: f64) -> Result<QTable> {
    value_iteration_with_report(p, grid, gamma, tol).map(|(q, _)| q)
}

pub fn value_iteration_with_report(
    p: &TransitionMatrix,
    grid: &GridSpec,
    gamma: f64,
    tol: f64,
) -> Result<(QTable, ValueIterationReport)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let alphabet = p.alphabet();
    let n = alphabet.len();
    let c = grid.cells();
    let next = successor_table(alphabet, grid);
    let mut v = vec![0.0; n * c];
    let mut w = vec![0.0; n * c];
    let mut q = vec![0.0; n * c * 4];
    let mut residuals = Vec::new();

    // W(d', u) = gamma * sum_u' P(u'|u) V(d', u'), then Q = 1 on capture, W otherwise.
    let backup = |v: &[f64], w: &mut [f64], q: &mut [f64]| {
        w.iter_mut().for_each(|x| *x = 0.0);
        for from in 0..n {
            let dst = &mut w[from * c..(from + 1) * c];
            for to in 0..n {
                let pr = p.prob(to, from);
                if pr == 0.0 {
                    continue;
                }
                for (x, &vv) in dst.iter_mut().zip(&v[to * c..(to + 1) * c]) {
                    *x += pr * vv;
                }
            }
            dst.iter_mut().for_each(|x| *x *= gamma);
        }
        for u in 0..n {
            for k in 0..c {
                let base = (u * c + k) * 4;
                for a in 0..4 {
                    let nx = next[base + a];
                    q[base + a] = if nx == CAPTURED { 1.0 } else { w[u * c + nx as usize] };
                }
            }
        }
    };

    let mut sweeps = 0;
    loop {
        backup(&v, &mut w, &mut q);
        sweeps += 1;
        let mut residual = 0.0_f64;
        for (k, vk) in v.iter_mut().enumerate() {
            let best = q[k * 4..k * 4 + 4].iter().copied().fold(f64::MIN, f64::max);
            residual = residual.max((best - *vk).abs());
            *vk = best;
        }
        residuals.push(residual);
        if residual <= tol {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NoConvergence { residual, sweeps });
        }
    }
    backup(&v, &mut w, &mut q);
    let table = QTable {
        side: grid.side(),
        alphabet,
        gamma,
        matrix_digest: p.digest(),
        residual: *residuals.last().expect("at least one sweep"),
        sweeps,
        values: q,
    };
    Ok((table, ValueIterationReport { residuals }))
}

/// Outcome of a cache lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// A file was present but unreadable or stale and has been rewritten.
    Rebuilt,
}

/// File name keyed by lattice side, alphabet, discount and matrix digest.
pub fn cache_path(dir: &Path, p: &TransitionMatrix, grid: &GridSpec, gamma: f64) -> PathBuf {
    let hex = p.digest_hex();
    dir.join(format!(
        "q_L{}_n{}_g{}_{}.qtb",
        grid.side(),
        p.len(),
        QTable::gamma_text(gamma),
        &hex[..16]
    ))
}

/// Read a cached table if present and valid.
pub fn load_cached(dir: &Path, p: &TransitionMatrix, grid: &GridSpec, gamma: f64) -> Result<Option<QTable>> {
    let path = cache_path(dir, p, grid, gamma);
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&path)?;
    match QTable::from_bytes(&bytes) {
        Ok(t) if t.matches(p, grid, gamma) => Ok(Some(t)),
        _ => Ok(None),
    }
}

pub fn store(dir: &Path, table: &QTable, p: &TransitionMatrix, grid: &GridSpec) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, p, grid, table.gamma);
    let tmp = path.with_extension("qtb.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&table.to_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Load the table from `dir`, or solve and store it.
pub fn load_or_compute(
    dir: &Path,
    p: &TransitionMatrix,
    grid: &GridSpec,
    gamma: f64,
    tol: f64,
) -> Result<(QTable, CacheStatus)> {
    let existed = cache_path(dir, p, grid, gamma).exists();
    if let Some(t) = load_cached(dir, p, grid, gamma)? {
        return Ok((t, CacheStatus::Hit));
    }
    let t = value_iteration(p, grid, gamma, tol)?;
    store(dir, &t, p, grid)?;
    Ok((t, if existed { CacheStatus::Rebuilt } else { CacheStatus::Miss }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{discrete_transition_matrix, DiscreteRtParams};
    use std::collections::HashMap;

    fn stationary_table(side: usize) -> (GridSpec, TransitionMatrix, QTable) {
        let g = GridSpec::unit(side).unwrap();
        let p = TransitionMatrix::stationary(Alphabet::Cardinal);
        let q = value_iteration(&p, &g, DEFAULT_GAMMA, DEFAULT_TOLERANCE).unwrap();
        (g, p, q)
    }

    /// Finite-horizon expectimax written directly on `(di, dj)` pairs.
    fn expectimax(
        side: i64,
        p: &TransitionMatrix,
        gamma: f64,
        d: (i64, i64),
        u: usize,
        a: (i64, i64),
        horizon: usize,
        memo: &mut HashMap<((i64, i64), usize, usize), f64>,
    ) -> f64 {
        let half = side / 2;
        let wrap = |x: i64| (x + half).rem_euclid(side) - half;
        let (ui, uj) = p.alphabet().velocity(u);
        let nd = (wrap(d.0 + a.0 - ui), wrap(d.1 + a.1 - uj));
        if nd.0 * nd.0 + nd.1 * nd.1 <= 2 {
            return 1.0;
        }
        if horizon == 1 {
            return 0.0;
        }
        let mut acc = 0.0;
        for u2 in 0..p.len() {
            let pr = p.prob(u2, u);
            if pr == 0.0 {
                continue;
            }
            let key = (nd, u2, horizon - 1);
            let v = if let Some(&v) = memo.get(&key) {
                v
            } else {
                let v = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .map(|&b| expectimax(side, p, gamma, nd, u2, b, horizon - 1, memo))
                    .fold(f64::MIN, f64::max);
                memo.insert(key, v);
                v
            };
            acc += pr * v;
        }
        gamma * acc
    }

    #[test]
    fn stationary_target_two_steps_away() {
        let (g, _, q) = stationary_table(9);
        let rest = Alphabet::Cardinal.rest();
        let v = q.value(&g, Displacement::new(3, 0), rest);
        assert!((v - 0.95).abs() < 1e-12, "{v}");
        assert!((q.q(&g, Displacement::new(3, 0), rest, Action::MinusI) - 0.95).abs() < 1e-12);
        assert!((q.q(&g, Displacement::new(2, 0), rest, Action::MinusI) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_expectimax_on_small_torus() {
        let (g, p, q) = stationary_table(9);
        let mut memo = HashMap::new();
        let mut worst = 0.0_f64;
        for u in 0..p.len() {
            for d in g.displacements() {
                for a in Action::ALL {
                    let want = expectimax(9, &p, 0.95, (d.di, d.dj), u, a.offset(), 10, &mut memo);
                    worst = worst.max((q.q(&g, d, u, a) - want).abs());
                }
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn capture_backups_are_one_and_values_bounded() {
        let g = GridSpec::unit(15).unwrap();
        let p = discrete_transition_matrix(DiscreteRtParams::from_persistence_time(5.0).unwrap());
        let (q, report) = value_iteration_with_report(&p, &g, 0.95, 1e-9).unwrap();
        let (lo, hi) = q.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        assert!(q.residual() <= 1e-9);
        for w in report.residuals.windows(2).skip(1) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
        }
        for u in 0..p.len() {
            let (ui, uj) = p.alphabet().velocity(u);
            for d in g.displacements() {
                for a in Action::ALL {
                    let (ai, aj) = a.offset();
                    let d2 = g.wrap_displacement(d.di + ai - ui, d.dj + aj - uj);
                    if d2.norm_sq() <= 2 {
                        assert_eq!(q.q(&g, d, u, a), 1.0);
                    }
                }
            }
        }
        assert!(q.equivariance_error(&g) < 1e-12);
    }

    #[test]
    fn rotated_states_share_values() {
        let g = GridSpec::unit(15).unwrap();
        let p = discrete_transition_matrix(DiscreteRtParams::from_persistence_time(10.0).unwrap());
        let q = value_iteration(&p, &g, 0.95, 1e-9).unwrap();
        let e1 = Alphabet::Cardinal.index_of((1, 0)).unwrap();
        let e2 = Alphabet::Cardinal.index_of((0, 1)).unwrap();
        let a = q.q(&g, Displacement::new(3, 0), e1, Action::PlusI);
        let b = q.q(&g, Displacement::new(0, 3), e2, Action::PlusJ);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_discount() {
        let g = GridSpec::unit(7).unwrap();
        let p = TransitionMatrix::stationary(Alphabet::Cardinal);
        assert!(value_iteration(&p, &g, 1.0, 1e-9).is_err());
        assert!(value_iteration(&p, &g, 0.9, 0.0).is_err());
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let (_, _, q) = stationary_table(7);
        let bytes = q.to_bytes();
        assert_eq!(QTable::from_bytes(&bytes).unwrap(), q);
        let mut bad = bytes.clone();
        bad[100] ^= 1;
        assert!(QTable::from_bytes(&bad).is_err());
        assert!(QTable::from_bytes(&bytes[..50]).is_err());
    }

    #[test]
    fn cache_hit_miss_rebuild() {
        let dir = std::env::temp_dir().join(format!("qtb-cache-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let g = GridSpec::unit(7).unwrap();
        let p = discrete_transition_matrix(DiscreteRtParams::new(0.5).unwrap());
        let (a, s1) = load_or_compute(&dir, &p, &g, 0.95, 1e-9).unwrap();
        assert_eq!(s1, CacheStatus::Miss);
        let (b, s2) = load_or_compute(&dir, &p, &g, 0.95, 1e-9).unwrap();
        assert_eq!(s2, CacheStatus::Hit);
        assert_eq!(a, b);
        let path = cache_path(&dir, &p, &g, 0.95);
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n / 2] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        let (c, s3) = load_or_compute(&dir, &p, &g, 0.95, 1e-9).unwrap();
        assert_eq!(s3, CacheStatus::Rebuilt);
        assert_eq!(a, c);
        fs::remove_dir_all(&dir).unwrap();
    }
}
