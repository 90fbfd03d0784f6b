//! Named native gate sets and the rewrite templates that lower foreign gates
//! onto them.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::{GateApplication, GateKind};

/// Affine angle map `scale * theta + offset` applied to the foreign gate's
/// parameter. A constant angle has `scale == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleExpr {
    pub scale: f64,
    pub offset: f64,
}

impl AngleExpr {
    pub const fn constant(offset: f64) -> Self {
        Self { scale: 0.0, offset }
    }

    pub const fn param() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub const fn shifted(offset: f64) -> Self {
        Self { scale: 1.0, offset }
    }

    pub fn eval(self, theta: f64) -> f64 {
        self.scale * theta + self.offset
    }

    /// `self` evaluated at the output of `inner`.
    pub fn compose(self, inner: AngleExpr) -> AngleExpr {
        AngleExpr {
            scale: self.scale * inner.scale,
            offset: self.scale * inner.offset + self.offset,
        }
    }
}

/// A gate in a rewrite template. `qubits` index into the operands of the gate
/// being rewritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateOp {
    pub gate: GateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<AngleExpr>,
    pub qubits: Vec<usize>,
}

impl TemplateOp {
    fn fixed(gate: GateKind, qubits: &[usize]) -> Self {
        Self {
            gate,
            angle: None,
            qubits: qubits.to_vec(),
        }
    }

    fn rot(gate: GateKind, angle: AngleExpr, qubits: &[usize]) -> Self {
        Self {
            gate,
            angle: Some(angle),
            qubits: qubits.to_vec(),
        }
    }

    fn rconst(gate: GateKind, angle: f64, qubits: &[usize]) -> Self {
        Self::rot(gate, AngleExpr::constant(angle), qubits)
    }
}

/// Ordered gate list replacing one foreign gate (first entry applied first).
pub type Template = Vec<TemplateOp>;

/// Instantiates a template for a concrete gate application.
pub fn instantiate(template: &[TemplateOp], op: &GateApplication) -> Vec<GateApplication> {
    let theta = op.params.first().copied().unwrap_or(0.0);
    template
        .iter()
        .map(|t| {
            let qubits = t.qubits.iter().map(|&i| op.qubits[i]).collect();
            let params = t.angle.map(|a| vec![a.eval(theta)]).unwrap_or_default();
            GateApplication::new(t.gate, params, qubits)
        })
        .collect()
}

/// Identifier of a built-in gate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSetName {
    Eagle,
    Ionq,
    Heron,
    CliffordT,
    CliffordS,
}

impl GateSetName {
    pub const ALL: [GateSetName; 5] = [
        GateSetName::Eagle,
        GateSetName::Ionq,
        GateSetName::Heron,
        GateSetName::CliffordT,
        GateSetName::CliffordS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GateSetName::Eagle => "eagle",
            GateSetName::Ionq => "ionq",
            GateSetName::Heron => "heron",
            GateSetName::CliffordT => "clifford_t",
            GateSetName::CliffordS => "clifford_s",
        }
    }
}

impl fmt::Display for GateSetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateSetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GateSetName::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| {
                format!("unknown gate set `{s}` (expected eagle, ionq, heron, clifford_t or clifford_s)")
            })
    }
}

/// A native gate set plus lowering rules for every foreign gate it supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSetConfig {
    pub name: String,
    pub gates: Vec<GateKind>,
    pub rules: BTreeMap<GateKind, Template>,
    pub global_phase_note: String,
}

impl GateSetConfig {
    pub fn builtin(name: GateSetName) -> Self {
        match name {
            GateSetName::Eagle => Self::eagle(),
            GateSetName::Ionq => Self::ionq(),
            GateSetName::Heron => Self::heron(),
            GateSetName::CliffordT => Self::clifford_t(),
            GateSetName::CliffordS => Self::clifford_s(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self, String> {
        name.parse().map(Self::builtin)
    }

    pub fn contains(&self, gate: GateKind) -> bool {
        gate == GateKind::Measure || self.gates.contains(&gate)
    }

    /// Largest qubit arity among the native gates.
    pub fn max_arity(&self) -> usize {
        self.gates.iter().map(|g| g.num_qubits()).max().unwrap_or(0)
    }

    /// IBM Eagle: `{rz, sx, x, cx}`.
    pub fn eagle() -> Self {
        use GateKind::*;
        let mut raw = common_phase_rules();
        raw.insert(H, h_via_rz_sx());
        raw.insert(Rx, conj_by_h(Rz));
        raw.insert(Ry, ry_via_rx());
        raw.insert(Rxx, rxx_via_cx());
        raw.insert(Cz, vec![
            TemplateOp::fixed(H, &[1]),
            TemplateOp::fixed(Cx, &[0, 1]),
            TemplateOp::fixed(H, &[1]),
        ]);
        Self::lowered(
            "eagle",
            vec![Rz, Sx, X, Cx],
            raw,
            "rx/ry/rxx and h rewrites hold up to a global phase",
        )
    }

    /// IonQ: `{rx, ry, rz, rxx}`.
    pub fn ionq() -> Self {
        use GateKind::*;
        let mut raw = common_phase_rules();
        raw.insert(X, vec![TemplateOp::rconst(Rx, PI, &[0])]);
        raw.insert(Sx, vec![TemplateOp::rconst(Rx, FRAC_PI_2, &[0])]);
        raw.insert(H, vec![
            TemplateOp::rconst(Ry, FRAC_PI_2, &[0]),
            TemplateOp::rconst(Rx, PI, &[0]),
        ]);
        raw.insert(Cx, vec![
            TemplateOp::rconst(Ry, FRAC_PI_2, &[0]),
            TemplateOp::rconst(Rxx, FRAC_PI_2, &[0, 1]),
            TemplateOp::rconst(Rx, -FRAC_PI_2, &[0]),
            TemplateOp::rconst(Rx, -FRAC_PI_2, &[1]),
            TemplateOp::rconst(Ry, -FRAC_PI_2, &[0]),
        ]);
        raw.insert(Cz, vec![
            TemplateOp::fixed(H, &[1]),
            TemplateOp::fixed(Cx, &[0, 1]),
            TemplateOp::fixed(H, &[1]),
        ]);
        Self::lowered(
            "ionq",
            vec![Rx, Ry, Rz, Rxx],
            raw,
            "x -> rx(pi), sx -> rx(pi/2) and the cx sequence hold up to a global phase",
        )
    }

    /// IBM Heron: `{cz, rz, sx, x}`.
    pub fn heron() -> Self {
        use GateKind::*;
        let mut raw = common_phase_rules();
        raw.insert(H, h_via_rz_sx());
        raw.insert(Cx, vec![
            TemplateOp::fixed(H, &[1]),
            TemplateOp::fixed(Cz, &[0, 1]),
            TemplateOp::fixed(H, &[1]),
        ]);
        raw.insert(Rx, conj_by_h(Rz));
        raw.insert(Ry, ry_via_rx());
        raw.insert(Rxx, vec![
            TemplateOp::fixed(H, &[0]),
            TemplateOp::fixed(Cz, &[0, 1]),
            TemplateOp::rot(Rx, AngleExpr::param(), &[1]),
            TemplateOp::fixed(Cz, &[0, 1]),
            TemplateOp::fixed(H, &[0]),
        ]);
        Self::lowered(
            "heron",
            vec![Cz, Rz, Sx, X],
            raw,
            "cx -> h cz h is exact; h and rotations hold up to a global phase",
        )
    }

    /// Discrete `{h, t, tdg}` plus `cx`; continuous rotations need
    /// Solovay-Kitaev.
    pub fn clifford_t() -> Self {
        use GateKind::*;
        let mut raw = BTreeMap::new();
        raw.insert(S, vec![TemplateOp::fixed(T, &[0]), TemplateOp::fixed(T, &[0])]);
        raw.insert(Sdg, vec![TemplateOp::fixed(Tdg, &[0]), TemplateOp::fixed(Tdg, &[0])]);
        insert_discrete_cliffords(&mut raw);
        Self::lowered(
            "clifford_t",
            vec![H, T, Tdg, Cx],
            raw,
            "x and sx rewrites hold up to a global phase; rotations require solovay-kitaev",
        )
    }

    /// Discrete `{h, s, sdg}` plus `cx`. Clifford-only, so not dense in SU(2).
    pub fn clifford_s() -> Self {
        use GateKind::*;
        let mut raw = BTreeMap::new();
        insert_discrete_cliffords(&mut raw);
        Self::lowered(
            "clifford_s",
            vec![H, S, Sdg, Cx],
            raw,
            "x and sx rewrites hold up to a global phase; the set is Clifford-only",
        )
    }

    /// Builds a config from raw rules that may reference other foreign gates,
    /// expanding them until only native gates remain.
    fn lowered(
        name: &str,
        gates: Vec<GateKind>,
        raw: BTreeMap<GateKind, Template>,
        note: &str,
    ) -> Self {
        let rules = raw
            .keys()
            .filter(|g| !gates.contains(g))
            .map(|&g| (g, expand(&raw, &gates, &raw[&g], 0)))
            .collect();
        Self {
            name: name.to_string(),
            gates,
            rules,
            global_phase_note: note.to_string(),
        }
    }
}

fn common_phase_rules() -> BTreeMap<GateKind, Template> {
    use GateKind::*;
    let mut raw = BTreeMap::new();
    raw.insert(T, vec![TemplateOp::rconst(Rz, FRAC_PI_4, &[0])]);
    raw.insert(Tdg, vec![TemplateOp::rconst(Rz, -FRAC_PI_4, &[0])]);
    raw.insert(S, vec![TemplateOp::rconst(Rz, FRAC_PI_2, &[0])]);
    raw.insert(Sdg, vec![TemplateOp::rconst(Rz, -FRAC_PI_2, &[0])]);
    raw
}

fn insert_discrete_cliffords(raw: &mut BTreeMap<GateKind, Template>) {
    use GateKind::*;
    // X = H Z H with Z = S S; SX = H S H up to phase.
    raw.insert(X, vec![
        TemplateOp::fixed(H, &[0]),
        TemplateOp::fixed(S, &[0]),
        TemplateOp::fixed(S, &[0]),
        TemplateOp::fixed(H, &[0]),
    ]);
    raw.insert(Sx, vec![
        TemplateOp::fixed(H, &[0]),
        TemplateOp::fixed(S, &[0]),
        TemplateOp::fixed(H, &[0]),
    ]);
    raw.insert(Cz, vec![
        TemplateOp::fixed(H, &[1]),
        TemplateOp::fixed(Cx, &[0, 1]),
        TemplateOp::fixed(H, &[1]),
    ]);
}

fn h_via_rz_sx() -> Template {
    use GateKind::*;
    vec![
        TemplateOp::rconst(Rz, FRAC_PI_2, &[0]),
        TemplateOp::fixed(Sx, &[0]),
        TemplateOp::rconst(Rz, FRAC_PI_2, &[0]),
    ]
}

/// `H G(theta) H` for a single-qubit rotation `G`.
fn conj_by_h(gate: GateKind) -> Template {
    vec![
        TemplateOp::fixed(GateKind::H, &[0]),
        TemplateOp::rot(gate, AngleExpr::param(), &[0]),
        TemplateOp::fixed(GateKind::H, &[0]),
    ]
}

/// `Ry = S Rx S†`, i.e. sdg, rx, s in circuit order.
fn ry_via_rx() -> Template {
    use GateKind::*;
    vec![
        TemplateOp::fixed(Sdg, &[0]),
        TemplateOp::rot(Rx, AngleExpr::param(), &[0]),
        TemplateOp::fixed(S, &[0]),
    ]
}

/// `Rxx = (H⊗H) CX (I⊗Rz) CX (H⊗H)`.
fn rxx_via_cx() -> Template {
    use GateKind::*;
    vec![
        TemplateOp::fixed(H, &[0]),
        TemplateOp::fixed(H, &[1]),
        TemplateOp::fixed(Cx, &[0, 1]),
        TemplateOp::rot(Rz, AngleExpr::param(), &[1]),
        TemplateOp::fixed(Cx, &[0, 1]),
        TemplateOp::fixed(H, &[0]),
        TemplateOp::fixed(H, &[1]),
    ]
}

fn expand(
    raw: &BTreeMap<GateKind, Template>,
    native: &[GateKind],
    template: &[TemplateOp],
    depth: usize,
) -> Template {
    assert!(depth < 8, "cyclic gate-set rewrite rules");
    let mut out: Template = Vec::new();
    for op in template {
        if native.contains(&op.gate) {
            push_merged(&mut out, op.clone());
            continue;
        }
        let Some(inner) = raw.get(&op.gate) else {
            // Left in place; `validate_rules` reports it.
            out.push(op.clone());
            continue;
        };
        for sub in expand(raw, native, inner, depth + 1) {
            let qubits = sub.qubits.iter().map(|&i| op.qubits[i]).collect();
            let angle = match (sub.angle, op.angle) {
                (Some(a), Some(outer)) => Some(a.compose(outer)),
                (Some(a), None) => Some(AngleExpr::constant(a.offset)),
                (None, _) => None,
            };
            push_merged(
                &mut out,
                TemplateOp {
                    gate: sub.gate,
                    angle,
                    qubits,
                },
            );
        }
    }
    out
}

/// Appends `op`, fusing it with a directly preceding `rz` on the same qubit.
fn push_merged(out: &mut Template, op: TemplateOp) {
    if op.gate == GateKind::Rz {
        if let Some(last) = out.last_mut() {
            if last.gate == GateKind::Rz && last.qubits == op.qubits {
                let (a, b) = (last.angle.unwrap(), op.angle.unwrap());
                last.angle = Some(AngleExpr {
                    scale: a.scale + b.scale,
                    offset: a.offset + b.offset,
                });
                return;
            }
        }
    }
    out.push(op);
}
