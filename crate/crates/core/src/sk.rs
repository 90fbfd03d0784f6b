//! Solovay-Kitaev decomposition of single-qubit unitaries over a discrete,
//! inverse-closed basis.
//!
//! Unitaries are handled projectively as unit quaternions
//! `w·I − i(x·X + y·Y + z·Z)`; `q` and `−q` denote the same gate.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::{Circuit, GateApplication, GateKind};
use crate::exec::{self, Exec};
use crate::linalg::{gate_matrix, UnitaryMatrix};

#[derive(Debug, thiserror::Error)]
pub enum SkError {
    #[error("basis is empty")]
    EmptyBasis,
    #[error("basis gate `{0}` is not a parameter-free single-qubit gate")]
    BadBasisGate(GateKind),
    #[error("basis is not closed under inverses: `{0}` lacks its inverse")]
    NotInverseClosed(GateKind),
    #[error("expected a 2x2 unitary, got dimension {0}")]
    NotSingleQubit(usize),
    #[error("gate `{0}` cannot be decomposed")]
    Undecomposable(GateKind),
    #[error("net cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Unit quaternion for an element of SU(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2(pub [f64; 4]);

impl Su2 {
    pub const IDENTITY: Su2 = Su2([1.0, 0.0, 0.0, 0.0]);

    /// Projects a 2x2 unitary onto SU(2) by removing `sqrt(det)`.
    pub fn from_unitary(u: &UnitaryMatrix) -> Result<Self, SkError> {
        if u.dim() != 2 {
            return Err(SkError::NotSingleQubit(u.dim()));
        }
        let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
        let inv = Complex64::from_polar(1.0, -det.arg() / 2.0);
        let (a, b, c, d) = (u[(0, 0)] * inv, u[(0, 1)] * inv, u[(1, 0)] * inv, u[(1, 1)] * inv);
        let q = [
            (a.re + d.re) / 2.0,
            -(c.im + b.im) / 2.0,
            (c.re - b.re) / 2.0,
            (d.im - a.im) / 2.0,
        ];
        Ok(Su2(q).normalized())
    }

    pub fn to_unitary(self) -> UnitaryMatrix {
        let [w, x, y, z] = self.0;
        UnitaryMatrix::from_rows(
            2,
            vec![
                Complex64::new(w, -z),
                Complex64::new(-y, -x),
                Complex64::new(y, -x),
                Complex64::new(w, z),
            ],
        )
    }

    pub fn normalized(self) -> Self {
        let n = self.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        Su2(self.0.map(|v| v / n))
    }

    /// Matrix product `self · rhs`.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Su2) -> Su2 {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = rhs.0;
        Su2([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }

    pub fn dagger(self) -> Su2 {
        let [w, x, y, z] = self.0;
        Su2([w, -x, -y, -z])
    }

    /// Operator-norm distance minimized over global phase.
    pub fn distance(self, other: Su2) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let s = if dot < 0.0 { -1.0 } else { 1.0 };
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - s * b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Rotation by `angle` about the unit vector `axis`.
    pub fn rotation(axis: [f64; 3], angle: f64) -> Su2 {
        let (s, c) = (angle / 2.0).sin_cos();
        Su2([c, s * axis[0], s * axis[1], s * axis[2]])
    }

    /// Rotation angle in `[0, π]` and axis, treating `q` and `−q` alike.
    pub fn axis_angle(self) -> ([f64; 3], f64) {
        let q = if self.0[0] < 0.0 { self.0.map(|v| -v) } else { self.0 };
        let v = [q[1], q[2], q[3]];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let angle = 2.0 * norm.atan2(q[0]);
        if norm < 1e-300 {
            ([0.0, 0.0, 1.0], 0.0)
        } else {
            (v.map(|x| x / norm), angle)
        }
    }

    /// Sign-canonical quantized key for deduplication.
    fn fingerprint(self) -> [i64; 4] {
        let first = self.0.iter().copied().find(|v| v.abs() > 1e-9).unwrap_or(1.0);
        let s = if first < 0.0 { -1.0 } else { 1.0 };
        self.0.map(|v| (s * v * 1e8).round() as i64)
    }
}

/// Inverse of a parameter-free gate, if it is in the gate catalog.
pub fn inverse_gate(g: GateKind) -> Option<GateKind> {
    use GateKind::*;
    match g {
        H => Some(H),
        X => Some(X),
        T => Some(Tdg),
        Tdg => Some(T),
        S => Some(Sdg),
        Sdg => Some(S),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkConfig {
    pub basis: Vec<GateKind>,
    /// Longest sequence stored in the depth-0 net.
    pub base_length: usize,
    pub recursion_depth: usize,
    pub epsilon: f64,
}

impl Default for SkConfig {
    fn default() -> Self {
        Self {
            basis: vec![GateKind::H, GateKind::T, GateKind::Tdg],
            base_length: 12,
            recursion_depth: 2,
            epsilon: 1e-2,
        }
    }
}

impl SkConfig {
    pub fn validate(&self) -> Result<(), SkError> {
        if self.basis.is_empty() {
            return Err(SkError::EmptyBasis);
        }
        for &g in &self.basis {
            if g.num_qubits() != 1 || g.num_params() != 0 || !g.is_unitary() {
                return Err(SkError::BadBasisGate(g));
            }
            match inverse_gate(g) {
                Some(inv) if self.basis.contains(&inv) => {}
                _ => return Err(SkError::NotInverseClosed(g)),
            }
        }
        Ok(())
    }

    /// Stable key for the net cache.
    pub fn net_key(&self) -> String {
        let mut h = Sha256::new();
        for g in &self.basis {
            h.update(g.name().as_bytes());
            h.update([0u8]);
        }
        h.update((self.base_length as u64).to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkStatus {
    Ok,
    /// Distance stopped improving above the target across successive depths;
    /// typical of non-dense (Clifford-only) bases.
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkResult {
    /// Circuit order: the first gate is applied first.
    pub sequence: Vec<GateKind>,
    pub achieved_distance: f64,
    pub length: usize,
    pub status: SkStatus,
}

#[derive(Debug, Clone)]
struct NetEntry {
    q: Su2,
    seq: Vec<u8>,
}

/// Every distinct product of at most `base_length` basis gates, shortest
/// representative first.
#[derive(Debug, Clone)]
pub struct SkNet {
    basis: Vec<GateKind>,
    base_length: usize,
    entries: Vec<NetEntry>,
}

const CACHE_MAGIC: &[u8; 8] = b"QTSKNET1";

impl SkNet {
    pub fn build(cfg: &SkConfig, exec: Exec) -> Result<Self, SkError> {
        cfg.validate()?;
        let mats: Vec<Su2> = cfg
            .basis
            .iter()
            .map(|&g| Su2::from_unitary(&gate_matrix(g, &[]).expect("unitary")))
            .collect::<Result<_, _>>()?;
        let inverse_idx: Vec<u8> = cfg
            .basis
            .iter()
            .map(|&g| {
                let inv = inverse_gate(g).expect("validated");
                cfg.basis.iter().position(|&b| b == inv).expect("validated") as u8
            })
            .collect();

        let mut seen: HashMap<[i64; 4], ()> = HashMap::new();
        let root = NetEntry {
            q: Su2::IDENTITY,
            seq: Vec::new(),
        };
        seen.insert(root.q.fingerprint(), ());
        let mut entries = vec![root];
        let mut frontier = 0..1;
        for _ in 0..cfg.base_length {
            let level = &entries[frontier.clone()];
            let candidates = exec::map_slice(exec, level, |e| {
                let last = e.seq.last().copied();
                (0..mats.len())
                    .filter(|&i| last.is_none_or(|l| inverse_idx[l as usize] as usize != i))
                    .map(|i| {
                        let q = mats[i].mul(e.q);
                        let mut seq = e.seq.clone();
                        seq.push(i as u8);
                        NetEntry { q, seq }
                    })
                    .collect::<Vec<_>>()
            });
            let start = entries.len();
            for cand in candidates.into_iter().flatten() {
                if seen.insert(cand.q.fingerprint(), ()).is_none() {
                    entries.push(cand);
                }
            }
            frontier = start..entries.len();
            if frontier.is_empty() {
                break;
            }
        }
        Ok(Self {
            basis: cfg.basis.clone(),
            base_length: cfg.base_length,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn matches(&self, cfg: &SkConfig) -> bool {
        self.basis == cfg.basis && self.base_length == cfg.base_length
    }

    fn nearest(&self, target: Su2) -> (&NetEntry, f64) {
        let mut best = (&self.entries[0], f64::INFINITY);
        for e in &self.entries {
            let d = e.q.distance(target);
            if d < best.1 {
                best = (e, d);
            }
        }
        best
    }

    fn names(&self, seq: &[u8]) -> Vec<GateKind> {
        seq.iter().map(|&i| self.basis[i as usize]).collect()
    }

    pub fn cache_path(dir: &Path, cfg: &SkConfig) -> PathBuf {
        dir.join(format!("sknet-{}.bin", cfg.net_key()))
    }

    /// Binary layout (little-endian): magic `QTSKNET1`; u32 basis count; per
    /// gate a u8 name length and the name bytes; u32 base length; u64 entry
    /// count; per entry four f64 quaternion components, a u16 sequence length
    /// and one u8 basis index per gate.
    pub fn save(&self, path: &Path) -> Result<(), SkError> {
        let mut buf = Vec::with_capacity(self.entries.len() * 48);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(self.basis.len() as u32).to_le_bytes());
        for g in &self.basis {
            buf.push(g.name().len() as u8);
            buf.extend_from_slice(g.name().as_bytes());
        }
        buf.extend_from_slice(&(self.base_length as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            for v in e.q.0 {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&(e.seq.len() as u16).to_le_bytes());
            buf.extend_from_slice(&e.seq);
        }
        let io = |source| SkError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(&buf).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, SkError> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| SkError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let bad = |message: &str| SkError::Cache {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(8).ok_or_else(|| bad("truncated header"))? != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let nb = r.u32().ok_or_else(|| bad("truncated basis"))? as usize;
        let mut basis = Vec::with_capacity(nb);
        for _ in 0..nb {
            let len = r.take(1).ok_or_else(|| bad("truncated basis"))?[0] as usize;
            let name = r.take(len).ok_or_else(|| bad("truncated basis"))?;
            let name = std::str::from_utf8(name).map_err(|_| bad("basis name is not UTF-8"))?;
            basis.push(name.parse::<GateKind>().map_err(|_| bad("unknown basis gate"))?);
        }
        let base_length = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let count = r.u64().ok_or_else(|| bad("truncated header"))? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let mut q = [0.0; 4];
            for v in &mut q {
                *v = r.f64().ok_or_else(|| bad("truncated entry"))?;
            }
            let len = r.u16().ok_or_else(|| bad("truncated entry"))? as usize;
            let seq = r.take(len).ok_or_else(|| bad("truncated entry"))?.to_vec();
            if seq.iter().any(|&i| i as usize >= basis.len()) {
                return Err(bad("basis index out of range"));
            }
            entries.push(NetEntry { q: Su2(q), seq });
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        if entries.is_empty() {
            return Err(bad("empty net"));
        }
        Ok(Self {
            basis,
            base_length,
            entries,
        })
    }

    /// Loads the cached net for `cfg` from `dir`, building and saving it on a
    /// miss or mismatch.
    pub fn load_or_build(dir: &Path, cfg: &SkConfig, exec: Exec) -> Result<Self, SkError> {
        let path = Self::cache_path(dir, cfg);
        if let Ok(net) = Self::load(&path) {
            if net.matches(cfg) {
                return Ok(net);
            }
        }
        let net = Self::build(cfg, exec)?;
        fs::create_dir_all(dir).map_err(|source| SkError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        net.save(&path)?;
        Ok(net)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(out)
    }
    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Approximation carried through the recursion: group element and basis
/// index sequence.
#[derive(Debug, Clone)]
struct Approx {
    q: Su2,
    seq: Vec<u8>,
}

/// Solovay-Kitaev decomposer over a prebuilt net.
#[derive(Debug, Clone)]
pub struct SolovayKitaev {
    net: SkNet,
    inverse_idx: Vec<u8>,
}

impl SolovayKitaev {
    pub fn new(net: SkNet) -> Self {
        let inverse_idx = net
            .basis
            .iter()
            .map(|&g| {
                let inv = inverse_gate(g).expect("net basis is inverse-closed");
                net.basis.iter().position(|&b| b == inv).expect("inverse in basis") as u8
            })
            .collect();
        Self { net, inverse_idx }
    }

    pub fn build(cfg: &SkConfig, exec: Exec) -> Result<Self, SkError> {
        Ok(Self::new(SkNet::build(cfg, exec)?))
    }

    pub fn net(&self) -> &SkNet {
        &self.net
    }

    fn basic(&self, target: Su2) -> Approx {
        let (e, _) = self.net.nearest(target);
        Approx {
            q: e.q,
            seq: e.seq.clone(),
        }
    }

    fn invert(&self, seq: &[u8]) -> Vec<u8> {
        seq.iter().rev().map(|&i| self.inverse_idx[i as usize]).collect()
    }

    fn recurse(&self, target: Su2, depth: usize) -> Approx {
        if depth == 0 {
            return self.basic(target);
        }
        let prev = self.recurse(target, depth - 1);
        let delta = target.mul(prev.q.dagger());
        let (v, w) = balanced_commutator(delta);
        let v_prev = self.recurse(v, depth - 1);
        let w_prev = self.recurse(w, depth - 1);
        let q = v_prev
            .q
            .mul(w_prev.q)
            .mul(v_prev.q.dagger())
            .mul(w_prev.q.dagger())
            .mul(prev.q);
        let better = q.distance(target) < prev.q.distance(target);
        if !better {
            // The correction did not help; keep the shallower approximation.
            return prev;
        }
        let mut seq = prev.seq;
        seq.extend(self.invert(&w_prev.seq));
        seq.extend(self.invert(&v_prev.seq));
        seq.extend(w_prev.seq);
        seq.extend(v_prev.seq);
        Approx { q, seq }
    }

    fn result(&self, a: Approx, target: Su2, status: SkStatus) -> SkResult {
        let sequence = self.net.names(&a.seq);
        SkResult {
            length: sequence.len(),
            sequence,
            achieved_distance: a.q.distance(target),
            status,
        }
    }

    /// Closest net element to `u`.
    pub fn basic_approx(&self, u: &UnitaryMatrix) -> Result<SkResult, SkError> {
        let target = Su2::from_unitary(u)?;
        Ok(self.result(self.basic(target), target, SkStatus::Ok))
    }

    /// Result at exactly `depth` recursion levels.
    pub fn decompose_at(&self, u: &UnitaryMatrix, depth: usize) -> Result<SkResult, SkError> {
        let target = Su2::from_unitary(u)?;
        Ok(self.result(self.recurse(target, depth), target, SkStatus::Ok))
    }

    /// Results at every depth `0..=max_depth`.
    pub fn decompose_trace(&self, u: &UnitaryMatrix, max_depth: usize) -> Result<Vec<SkResult>, SkError> {
        (0..=max_depth).map(|d| self.decompose_at(u, d)).collect()
    }

    /// Decomposes at `cfg.recursion_depth`, flagging a plateau when two
    /// successive depths fail to improve while above `cfg.epsilon`.
    pub fn sk_decompose(&self, u: &UnitaryMatrix, cfg: &SkConfig) -> Result<SkResult, SkError> {
        let trace = self.decompose_trace(u, cfg.recursion_depth)?;
        let plateau = trace.windows(2).any(|w| {
            w[1].achieved_distance > cfg.epsilon
                && w[1].achieved_distance >= w[0].achieved_distance * (1.0 - 1e-12)
        });
        let mut last = trace.into_iter().last().expect("depth 0 always present");
        if plateau {
            last.status = SkStatus::Plateau;
        }
        Ok(last)
    }

    /// Shallowest result meeting `budget`, or the deepest one otherwise.
    pub fn decompose_to(&self, u: &UnitaryMatrix, budget: f64, max_depth: usize) -> Result<SkResult, SkError> {
        let mut last = None;
        for d in 0..=max_depth {
            let r = self.decompose_at(u, d)?;
            if r.achieved_distance <= budget {
                return Ok(r);
            }
            if let Some(prev) = &last {
                let prev: &SkResult = prev;
                if r.achieved_distance >= prev.achieved_distance * (1.0 - 1e-12) {
                    let mut r = r;
                    r.status = SkStatus::Plateau;
                    last = Some(r);
                    continue;
                }
            }
            last = Some(r);
        }
        Ok(last.expect("at least depth 0"))
    }
}

/// Balanced group commutator: returns `(V, W)` with `V W V† W† = Δ` up to sign.
pub fn balanced_commutator(delta: Su2) -> (Su2, Su2) {
    let (axis, theta) = delta.axis_angle();
    if theta < 1e-15 {
        return (Su2::IDENTITY, Su2::IDENTITY);
    }
    // sin(θ/2) = 2 sin²(φ/2) sqrt(1 − sin⁴(φ/2))
    let s = ((1.0 - (theta / 2.0).cos()) / 2.0).powf(0.25);
    let phi = 2.0 * s.asin();
    let v0 = Su2::rotation([1.0, 0.0, 0.0], phi);
    let w0 = Su2::rotation([0.0, 1.0, 0.0], phi);
    let comm = v0.mul(w0).mul(v0.dagger()).mul(w0.dagger());
    let (comm_axis, _) = comm.axis_angle();
    let s_rot = rotation_between(comm_axis, axis);
    (
        s_rot.mul(v0).mul(s_rot.dagger()),
        s_rot.mul(w0).mul(s_rot.dagger()),
    )
}

/// Rotation taking unit vector `from` onto unit vector `to`.
fn rotation_between(from: [f64; 3], to: [f64; 3]) -> Su2 {
    let cross = [
        from[1] * to[2] - from[2] * to[1],
        from[2] * to[0] - from[0] * to[2],
        from[0] * to[1] - from[1] * to[0],
    ];
    let dot = (from[0] * to[0] + from[1] * to[1] + from[2] * to[2]).clamp(-1.0, 1.0);
    let norm = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    if norm < 1e-12 {
        if dot > 0.0 {
            return Su2::IDENTITY;
        }
        // Antiparallel: rotate by π about any perpendicular axis.
        let trial = if from[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let p = [
            from[1] * trial[2] - from[2] * trial[1],
            from[2] * trial[0] - from[0] * trial[2],
            from[0] * trial[1] - from[1] * trial[0],
        ];
        let pn = (p[0].powi(2) + p[1].powi(2) + p[2].powi(2)).sqrt();
        return Su2::rotation(p.map(|v| v / pn), std::f64::consts::PI);
    }
    Su2::rotation(cross.map(|v| v / norm), dot.acos())
}

/// Outcome of decomposing a whole circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkCircuitReport {
    pub circuit: Circuit,
    /// Number of decomposed single-qubit gates.
    pub decomposed: usize,
    /// Per-gate distance budget `epsilon / decomposed`.
    pub budget: f64,
    pub distances: Vec<f64>,
    /// Sum of per-gate distances; bounds the operator-norm error of the whole
    /// circuit up to global phase.
    pub total_distance: f64,
    /// Fidelity guaranteed by `total_distance`, see [`fidelity_floor`].
    pub fidelity_floor: f64,
    pub plateaus: usize,
}

/// Lower bound on the trace fidelity of two unitaries whose phase-minimized
/// operator-norm distance is at most `distance`: every eigenvalue `λ` of
/// `U†V` has `Re λ ≥ 1 − distance²/2`.
pub fn fidelity_floor(distance: f64) -> f64 {
    let r = (1.0 - distance * distance / 2.0).max(0.0);
    r * r
}

/// Replaces every single-qubit gate outside the basis by its decomposition at
/// budget `cfg.epsilon / m`. Two-qubit gates and measurements pass through.
pub fn sk_circuit(c: &Circuit, sk: &SolovayKitaev, cfg: &SkConfig) -> Result<SkCircuitReport, SkError> {
    let needs = |op: &GateApplication| op.gate.is_unitary() && op.qubits.len() == 1 && !cfg.basis.contains(&op.gate);
    let m = c.ops.iter().filter(|op| needs(op)).count();
    let budget = if m == 0 { cfg.epsilon } else { cfg.epsilon / m as f64 };
    let mut out = Circuit::with_clbits(c.num_qubits, c.num_clbits);
    let mut distances = Vec::with_capacity(m);
    let mut plateaus = 0;
    for op in &c.ops {
        if !needs(op) {
            out.push(op.clone());
            continue;
        }
        let u = gate_matrix(op.gate, &op.params).ok_or(SkError::Undecomposable(op.gate))?;
        let r = sk.decompose_to(&u, budget, cfg.recursion_depth)?;
        if r.status == SkStatus::Plateau {
            plateaus += 1;
        }
        distances.push(r.achieved_distance);
        for g in r.sequence {
            out.push(GateApplication::fixed(g, &op.qubits));
        }
    }
    let total_distance: f64 = distances.iter().sum();
    Ok(SkCircuitReport {
        circuit: out,
        decomposed: m,
        budget,
        total_distance,
        fidelity_floor: fidelity_floor(total_distance),
        distances,
        plateaus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{circuit_unitary, fidelity, rz};
    use std::f64::consts::PI;

    fn small_cfg(len: usize) -> SkConfig {
        SkConfig {
            base_length: len,
            ..SkConfig::default()
        }
    }

    /// Phase-minimized operator-norm distance from the eigenvalues of `A†B`.
    fn oracle_distance(a: &UnitaryMatrix, b: &UnitaryMatrix) -> f64 {
        let m = &a.dagger() * b;
        let tr = m.trace();
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr - det * 4.0).sqrt();
        let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
        let (p1, p2) = (l1.arg(), l2.arg());
        // Best phase centres both eigenphases; two candidate centres.
        [(p1 + p2) / 2.0, (p1 + p2) / 2.0 + PI]
            .iter()
            .map(|&c| {
                let d1 = (Complex64::from_polar(1.0, p1 - c) - 1.0).norm();
                let d2 = (Complex64::from_polar(1.0, p2 - c) - 1.0).norm();
                d1.max(d2)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn su2_round_trip_and_product() {
        let a = gate_matrix(GateKind::H, &[]).unwrap();
        let b = gate_matrix(GateKind::T, &[]).unwrap();
        let qa = Su2::from_unitary(&a).unwrap();
        let qb = Su2::from_unitary(&b).unwrap();
        let prod = Su2::from_unitary(&(&a * &b)).unwrap();
        assert!(qa.mul(qb).distance(prod) < 1e-14);
        assert!(oracle_distance(&qa.to_unitary(), &a) < 1e-7);
        assert!(fidelity(&qa.to_unitary(), &a).unwrap().fidelity > 1.0 - 1e-14);
    }

    #[test]
    fn distance_matches_eigenvalue_oracle() {
        for (i, theta) in [0.1, 0.7, 2.0, 3.0].iter().enumerate() {
            let a = rz(*theta);
            let b = &gate_matrix(GateKind::H, &[]).unwrap() * &crate::linalg::ry(0.3 * i as f64);
            let d = Su2::from_unitary(&a).unwrap().distance(Su2::from_unitary(&b).unwrap());
            assert!((d - oracle_distance(&a, &b)).abs() < 1e-10);
        }
    }

    #[test]
    fn commutator_reproduces_delta() {
        for (axis, theta) in [([0.0, 0.0, 1.0], 0.05), ([0.6, 0.0, 0.8], 0.3), ([0.0, 1.0, 0.0], 0.01)] {
            let delta = Su2::rotation(axis, theta);
            let (v, w) = balanced_commutator(delta);
            let c = v.mul(w).mul(v.dagger()).mul(w.dagger());
            assert!(c.distance(delta) < 1e-12, "{theta}");
        }
    }

    #[test]
    fn identity_and_basis_members() {
        let sk = SolovayKitaev::build(&small_cfg(6), Exec::Sequential).unwrap();
        let r = sk.basic_approx(&UnitaryMatrix::identity(2)).unwrap();
        assert!(r.sequence.is_empty());
        assert!(r.achieved_distance < 1e-12);
        let t = gate_matrix(GateKind::T, &[]).unwrap();
        let r = sk.basic_approx(&t).unwrap();
        assert_eq!(r.sequence, vec![GateKind::T]);
        assert!(r.achieved_distance < 1e-12);
        let h = gate_matrix(GateKind::H, &[]).unwrap();
        for d in 0..3 {
            let r = sk.decompose_at(&h, d).unwrap();
            assert_eq!(r.sequence, vec![GateKind::H]);
        }
        // Rz(π/4) is T up to phase.
        let r = sk.basic_approx(&rz(PI / 4.0)).unwrap();
        assert_eq!(r.sequence, vec![GateKind::T]);
    }

    #[test]
    fn basic_approx_matches_brute_force() {
        let len = 6;
        let sk = SolovayKitaev::build(&small_cfg(len), Exec::Sequential).unwrap();
        let target = rz(0.3);
        let mats: Vec<UnitaryMatrix> = [GateKind::H, GateKind::T, GateKind::Tdg]
            .iter()
            .map(|&g| gate_matrix(g, &[]).unwrap())
            .collect();
        // Enumerate every word of length <= len with plain matrix products.
        let mut best = oracle_distance(&target, &UnitaryMatrix::identity(2));
        let mut level = vec![UnitaryMatrix::identity(2)];
        for _ in 0..len {
            let mut next = Vec::with_capacity(level.len() * 3);
            for u in &level {
                for g in &mats {
                    let w = g * u;
                    best = best.min(oracle_distance(&target, &w));
                    next.push(w);
                }
            }
            level = next;
        }
        let r = sk.basic_approx(&target).unwrap();
        assert!((r.achieved_distance - best).abs() < 1e-9, "{} vs {best}", r.achieved_distance);
    }

    #[test]
    fn reported_distance_is_recomputable() {
        let sk = SolovayKitaev::build(&small_cfg(8), Exec::Parallel).unwrap();
        let target = rz(PI / 8.0);
        for d in 0..3 {
            let r = sk.decompose_at(&target, d).unwrap();
            let mut c = Circuit::new(1);
            for &g in &r.sequence {
                c.push(GateApplication::fixed(g, &[0]));
            }
            let u = circuit_unitary(&c).unwrap();
            assert!((oracle_distance(&target, &u) - r.achieved_distance).abs() < 1e-10);
            assert!(r.sequence.iter().all(|g| sk.net().basis.contains(g)));
        }
    }

    #[test]
    fn clifford_only_basis_plateaus() {
        let cfg = SkConfig {
            basis: vec![GateKind::H, GateKind::S, GateKind::Sdg],
            base_length: 6,
            recursion_depth: 2,
            epsilon: 1e-3,
        };
        let sk = SolovayKitaev::build(&cfg, Exec::Sequential).unwrap();
        // Clifford group mod phase has 24 elements.
        assert_eq!(sk.net().len(), 24);
        let r = sk.sk_decompose(&rz(0.3), &cfg).unwrap();
        assert_eq!(r.status, SkStatus::Plateau);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SkConfig {
            basis: vec![],
            ..Default::default()
        };
        assert!(matches!(SkNet::build(&cfg, Exec::Sequential), Err(SkError::EmptyBasis)));
        cfg.basis = vec![GateKind::H, GateKind::T];
        assert!(matches!(cfg.validate(), Err(SkError::NotInverseClosed(GateKind::T))));
        cfg.basis = vec![GateKind::Rz];
        assert!(matches!(cfg.validate(), Err(SkError::BadBasisGate(GateKind::Rz))));
        let sk = SolovayKitaev::build(&small_cfg(2), Exec::Sequential).unwrap();
        assert!(matches!(
            sk.basic_approx(&UnitaryMatrix::identity(4)),
            Err(SkError::NotSingleQubit(4))
        ));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(5);
        let net = SkNet::load_or_build(dir.path(), &cfg, Exec::Sequential).unwrap();
        let path = SkNet::cache_path(dir.path(), &cfg);
        assert!(path.exists());
        let loaded = SkNet::load(&path).unwrap();
        assert_eq!(loaded.len(), net.len());
        assert!(loaded.matches(&cfg));
        for (a, b) in loaded.entries.iter().zip(&net.entries) {
            assert_eq!(a.q, b.q);
            assert_eq!(a.seq, b.seq);
        }
        // Corrupt file is rejected.
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(SkNet::load(&path), Err(SkError::Cache { .. })));
        // and rebuilt transparently.
        let again = SkNet::load_or_build(dir.path(), &cfg, Exec::Sequential).unwrap();
        assert_eq!(again.len(), net.len());
    }

    #[test]
    fn sk_circuit_passes_two_qubit_gates() {
        let sk = SolovayKitaev::build(&small_cfg(4), Exec::Sequential).unwrap();
        let mut c = Circuit::new(2);
        c.push(GateApplication::fixed(GateKind::Cx, &[0, 1]));
        c.push(GateApplication::fixed(GateKind::Cx, &[1, 0]));
        let r = sk_circuit(&c, &sk, &small_cfg(4)).unwrap();
        assert_eq!(r.circuit, c);
        assert_eq!(r.decomposed, 0);
    }

    #[test]
    fn sk_circuit_rz_quarter_pi_is_t() {
        let sk = SolovayKitaev::build(&small_cfg(4), Exec::Sequential).unwrap();
        let mut c = Circuit::new(1);
        c.push(GateApplication::rotation(GateKind::Rz, PI / 4.0, &[0]));
        let r = sk_circuit(&c, &sk, &small_cfg(4)).unwrap();
        assert_eq!(r.circuit.ops, vec![GateApplication::fixed(GateKind::T, &[0])]);
        assert!(r.total_distance < 1e-12);
    }
}
