//! Facet Bell inequalities for `[2,2]` and `[3,2]`.
//!
//! Instead of running a convex-hull facet enumeration, this module generates
//! the relabeling-symmetry orbits of the two canonical inequality classes
//! (CHSH in its joint-probability CH form, and I3322 in the Collins-Gisin
//! form). The orbit pipeline works in exact rational arithmetic so that
//! deduplication, classical bounds and facet-vertex incidence are free of
//! rounding decisions; coefficients are converted to `f64` only at the
//! public boundary.
//!
//! Coefficient vectors are non-unique: adding any functional that is
//! constant on the polytope's affine hull — a combination of the per-(x,y)
//! normalization identities `Σ_ab P(ab|xy) = 1` and of the no-signaling
//! marginal identities — shifts the coefficients without changing the
//! inequality on behaviors. The canonical form used throughout fixes this
//! gauge by orthogonally projecting the coefficients onto the complement
//! of that identity space, rescaling so `max|h_i| = 1`, and recomputing
//! the classical bound over the deterministic vertices. Quotienting by
//! normalization shifts alone is not enough: representatives of one
//! geometric facet can still differ by a no-signaling identity, which
//! inflates the orbit counts (the 8 and 648 regressions below fail
//! eightfold under the weaker reduction).

use crate::scenario::{enumerate_vertices, DeterministicVertex, Scenario, ScenarioError};
use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

type Rat = Ratio<i128>;

/// Tolerance for floating-point tightness and incidence decisions.
pub const TOL_TIGHT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FacetError {
    #[error("canonical CHSH requires k = 2, scenario has k = {k}")]
    UnsupportedOutcomes { k: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("inequality is not tight: stated bound {stated}, vertex maximum {actual}")]
    NotTight { stated: f64, actual: f64 },
    #[error("coefficient {value} at index {index} is not a small rational")]
    NonRationalCoefficient { index: usize, value: f64 },
    #[error("coefficient vector vanishes after canonical reduction")]
    DegenerateInequality,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// A Bell inequality `Σ h_abxy · P(ab|xy) ≤ c` over one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellInequality {
    pub scenario: Scenario,
    /// Coefficient vector in behavior index order.
    #[serde(rename = "h")]
    pub coefficients: Vec<f64>,
    /// Classical bound: the maximum of `h·v` over deterministic vertices.
    #[serde(rename = "c")]
    pub classical_bound: f64,
}

impl BellInequality {
    pub fn new(
        scenario: Scenario,
        coefficients: Vec<f64>,
        classical_bound: f64,
    ) -> Result<Self, FacetError> {
        if coefficients.len() != scenario.dim() {
            return Err(FacetError::DimensionMismatch {
                got: coefficients.len(),
                expected: scenario.dim(),
            });
        }
        Ok(Self {
            scenario,
            coefficients,
            classical_bound,
        })
    }

    /// The Bell value `h·P` of a behavior under this inequality.
    pub fn value(&self, behavior: &crate::scenario::Behavior) -> f64 {
        crate::scenario::dot(&self.coefficients, behavior)
    }

    /// Checks that the stated bound equals the vertex maximum within `tol`.
    pub fn is_tight(&self, vertices: &[DeterministicVertex], tol: f64) -> bool {
        (classical_bound(&self.coefficients, vertices) - self.classical_bound).abs() <= tol
    }
}

/// Maximum of `h·v` over the given deterministic vertices.
pub fn classical_bound(h: &[f64], vertices: &[DeterministicVertex]) -> f64 {
    vertices
        .iter()
        .map(|v| crate::scenario::dot(h, v.behavior()))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Vertices achieving `h·v = c` within [`TOL_TIGHT`]; for a tight
/// inequality these span its face.
pub fn spanning_vertices<'a>(
    ineq: &BellInequality,
    vertices: &'a [DeterministicVertex],
) -> Vec<&'a DeterministicVertex> {
    vertices
        .iter()
        .filter(|v| {
            (crate::scenario::dot(&ineq.coefficients, v.behavior()) - ineq.classical_bound).abs()
                <= TOL_TIGHT
        })
        .collect()
}

/// The two facet classes of the `[2,2]` and `[3,2]` local polytopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FacetClass {
    #[serde(rename = "CHSH")]
    Chsh,
    #[serde(rename = "I3322")]
    I3322,
}

impl std::fmt::Display for FacetClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FacetClass::Chsh => write!(f, "CHSH"),
            FacetClass::I3322 => write!(f, "I3322"),
        }
    }
}

/// A facet inequality together with orbit metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Facet {
    #[serde(flatten)]
    pub inequality: BellInequality,
    pub n_spanning: usize,
    pub class: FacetClass,
}

// ---------------------------------------------------------------------------
// Relabelings
// ---------------------------------------------------------------------------

/// A symmetry of the Bell scenario: optional party exchange composed with
/// per-party setting permutations and per-setting outcome permutations.
/// Acts on behaviors (and coefficient vectors) as a permutation of the
/// `m²k²` coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling {
    pub swap_parties: bool,
    /// New setting `x` reads old setting `alice_settings[x-1]` (1-based).
    pub alice_settings: Vec<usize>,
    pub bob_settings: Vec<usize>,
    /// New outcome `a` of new setting `x` reads old outcome
    /// `alice_outcomes[x-1][a-1]` (1-based).
    pub alice_outcomes: Vec<Vec<usize>>,
    pub bob_outcomes: Vec<Vec<usize>>,
}

impl Relabeling {
    /// Coordinate permutation `pi` with `(g·P)[i] = P[pi[i]]`.
    pub fn permutation(&self, scenario: Scenario) -> Vec<usize> {
        let dim = scenario.dim();
        let mut pi = vec![0usize; dim];
        for (i, slot) in pi.iter_mut().enumerate() {
            let (a, b, x, y) = scenario.decode(i).unwrap();
            let (sa, sb, sx, sy) = (
                self.alice_outcomes[x - 1][a - 1],
                self.bob_outcomes[y - 1][b - 1],
                self.alice_settings[x - 1],
                self.bob_settings[y - 1],
            );
            *slot = if self.swap_parties {
                scenario.index(sb, sa, sy, sx).unwrap()
            } else {
                scenario.index(sa, sb, sx, sy).unwrap()
            };
        }
        pi
    }

    /// Enumerates the full relabeling group, `2·(m!)²·(k!)^(2m)` elements.
    pub fn enumerate(scenario: Scenario) -> Vec<Relabeling> {
        let (m, k) = (scenario.settings(), scenario.outcomes());
        let setting_perms = permutations(m);
        let outcome_perms = permutations(k);
        let outcome_assignments = cartesian_power(&outcome_perms, m);
        let mut group = Vec::new();
        for &swap_parties in &[false, true] {
            for sa in &setting_perms {
                for sb in &setting_perms {
                    for oa in &outcome_assignments {
                        for ob in &outcome_assignments {
                            group.push(Relabeling {
                                swap_parties,
                                alice_settings: sa.clone(),
                                bob_settings: sb.clone(),
                                alice_outcomes: oa.clone(),
                                bob_outcomes: ob.clone(),
                            });
                        }
                    }
                }
            }
        }
        group
    }
}

/// All permutations of `1..=n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (1..=n).collect();
    loop {
        out.push(current.clone());
        // next_permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1])
        else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
}

fn cartesian_power<T: Clone>(options: &[T], n: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut next = prefix.clone();
                    next.push(o.clone());
                    next
                })
            })
            .collect();
    }
    out
}

// ---------------------------------------------------------------------------
// Canonical inequalities
// ---------------------------------------------------------------------------

/// Builds joint-only coefficients from a Collins-Gisin table for `k = 2`:
/// `joint[x-1][y-1]` weights `P(11|xy)`, marginal weights are rewritten
/// through the joint probabilities of Bob's setting 1 (for Alice) and
/// Alice's setting 1 (for Bob).
fn from_collins_gisin(
    scenario: Scenario,
    joint: &[Vec<i64>],
    alice_marginal: &[i64],
    bob_marginal: &[i64],
) -> Vec<Rat> {
    let mut h = vec![Rat::zero(); scenario.dim()];
    let m = scenario.settings();
    for x in 1..=m {
        for y in 1..=m {
            h[scenario.index(1, 1, x, y).unwrap()] += Rat::from_integer(joint[x - 1][y - 1] as i128);
        }
    }
    for x in 1..=m {
        let w = Rat::from_integer(alice_marginal[x - 1] as i128);
        h[scenario.index(1, 1, x, 1).unwrap()] += w;
        h[scenario.index(1, 2, x, 1).unwrap()] += w;
    }
    for y in 1..=m {
        let w = Rat::from_integer(bob_marginal[y - 1] as i128);
        h[scenario.index(1, 1, 1, y).unwrap()] += w;
        h[scenario.index(2, 1, 1, y).unwrap()] += w;
    }
    h
}

/// The CHSH inequality in CH (joint-probability) form, embedded in the
/// setting pair (1,1)-(2,2) of any `[m,2]` scenario. Its classical bound
/// is 0 and the no-signaling maximum is 1/2.
pub fn canonical_chsh(scenario: Scenario) -> Result<BellInequality, FacetError> {
    if scenario.outcomes() != 2 {
        return Err(FacetError::UnsupportedOutcomes {
            k: scenario.outcomes(),
        });
    }
    let m = scenario.settings();
    let mut joint = vec![vec![0i64; m]; m];
    joint[0][0] = 1;
    joint[0][1] = 1;
    joint[1][0] = 1;
    joint[1][1] = -1;
    let mut alice = vec![0i64; m];
    let mut bob = vec![0i64; m];
    alice[0] = -1;
    bob[0] = -1;
    let h = from_collins_gisin(scenario, &joint, &alice, &bob);
    Ok(exact_to_public(scenario, &ExactIneq { h, c: Rat::zero() }))
}

/// The I3322 inequality (Collins-Gisin form) in joint-probability
/// coefficients over `[3,2]`; classical bound 0.
pub fn canonical_i3322() -> BellInequality {
    let scenario = Scenario::new(3, 2).unwrap();
    let joint = vec![vec![1, 1, 1], vec![1, 1, -1], vec![1, -1, 0]];
    let alice = vec![-2, -1, 0];
    let bob = vec![-1, 0, 0];
    let h = from_collins_gisin(scenario, &joint, &alice, &bob);
    exact_to_public(scenario, &ExactIneq { h, c: Rat::zero() })
}

// ---------------------------------------------------------------------------
// Gauge space
// ---------------------------------------------------------------------------

/// Orthogonal basis (unnormalized, exact) of the inequality gauge space:
/// the span of the normalization indicators and the no-signaling marginal
/// identities. Functionals in this space are constant on every normalized
/// no-signaling behavior, so coefficient vectors are compared modulo it.
pub struct GaugeBasis {
    scenario: Scenario,
    ortho: Vec<Vec<Rat>>,
    ortho_f64: Vec<(Vec<f64>, f64)>,
}

impl GaugeBasis {
    pub fn new(scenario: Scenario) -> Self {
        let (m, k) = (scenario.settings(), scenario.outcomes());
        let dim = scenario.dim();
        let mut generators: Vec<Vec<Rat>> = Vec::new();
        // Normalization indicator of each (x,y) block.
        for x in 1..=m {
            for y in 1..=m {
                let mut g = vec![Rat::zero(); dim];
                for a in 1..=k {
                    for b in 1..=k {
                        g[scenario.index(a, b, x, y).unwrap()] = Rat::from_integer(1);
                    }
                }
                generators.push(g);
            }
        }
        // Alice marginal identities: Σ_b P(ab|xy) − Σ_b P(ab|xy') = 0.
        for x in 1..=m {
            for a in 1..=k {
                for y in 1..m {
                    let mut g = vec![Rat::zero(); dim];
                    for b in 1..=k {
                        g[scenario.index(a, b, x, y).unwrap()] += Rat::from_integer(1);
                        g[scenario.index(a, b, x, y + 1).unwrap()] -= Rat::from_integer(1);
                    }
                    generators.push(g);
                }
            }
        }
        // Bob marginal identities.
        for y in 1..=m {
            for b in 1..=k {
                for x in 1..m {
                    let mut g = vec![Rat::zero(); dim];
                    for a in 1..=k {
                        g[scenario.index(a, b, x, y).unwrap()] += Rat::from_integer(1);
                        g[scenario.index(a, b, x + 1, y).unwrap()] -= Rat::from_integer(1);
                    }
                    generators.push(g);
                }
            }
        }
        // Gram-Schmidt without normalization stays rational; drop the
        // dependent generators (zero residuals).
        let mut ortho: Vec<Vec<Rat>> = Vec::new();
        for g in generators {
            let mut residual = g;
            for u in &ortho {
                let coef = rat_dot(&residual, u) / rat_dot(u, u);
                for (r, uv) in residual.iter_mut().zip(u.iter()) {
                    *r -= coef * uv;
                }
            }
            if residual.iter().any(|v| !v.is_zero()) {
                ortho.push(residual);
            }
        }
        let ortho_f64 = ortho
            .iter()
            .map(|u| {
                let uf: Vec<f64> = u.iter().map(rat_to_f64).collect();
                let nn = uf.iter().map(|v| v * v).sum::<f64>();
                (uf, nn)
            })
            .collect();
        Self {
            scenario,
            ortho,
            ortho_f64,
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// Exact orthogonal projection of `h` onto the gauge complement.
    fn project_out(&self, h: &[Rat]) -> Vec<Rat> {
        let mut out = h.to_vec();
        for u in &self.ortho {
            let coef = rat_dot(&out, u) / rat_dot(u, u);
            for (o, uv) in out.iter_mut().zip(u.iter()) {
                *o -= coef * uv;
            }
        }
        out
    }

    /// Floating-point twin of [`GaugeBasis::project_out`].
    pub fn project_out_f64(&self, h: &[f64]) -> Vec<f64> {
        let mut out = h.to_vec();
        for (u, nn) in &self.ortho_f64 {
            let coef = out.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>() / nn;
            for (o, uv) in out.iter_mut().zip(u.iter()) {
                *o -= coef * uv;
            }
        }
        out
    }
}

fn rat_dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Exact orbit pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ExactIneq {
    h: Vec<Rat>,
    c: Rat,
}

/// Index lists of the `1`-entries of each vertex behavior, for exact dots.
fn vertex_supports(vertices: &[DeterministicVertex]) -> Vec<Vec<usize>> {
    vertices
        .iter()
        .map(|v| {
            v.behavior()
                .as_slice()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p == 1.0)
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

fn exact_vertex_value(h: &[Rat], support: &[usize]) -> Rat {
    support.iter().map(|&i| h[i]).sum()
}

fn exact_classical_bound(h: &[Rat], supports: &[Vec<usize>]) -> Rat {
    supports
        .iter()
        .map(|s| exact_vertex_value(h, s))
        .max()
        .expect("no vertices")
}

/// Canonical gauge reduction: project out the identity space, scale so
/// `max|h_i| = 1`, recompute the bound over the vertices.
fn reduce(
    gauge: &GaugeBasis,
    h: Vec<Rat>,
    supports: &[Vec<usize>],
) -> Result<ExactIneq, FacetError> {
    let mut h = gauge.project_out(&h);
    let max_abs = h.iter().map(|v| v.abs()).max().unwrap_or_else(Rat::zero);
    if max_abs.is_zero() {
        return Err(FacetError::DegenerateInequality);
    }
    for v in h.iter_mut() {
        *v /= max_abs;
    }
    let c = exact_classical_bound(&h, supports);
    Ok(ExactIneq { h, c })
}

fn exact_to_public(scenario: Scenario, ineq: &ExactIneq) -> BellInequality {
    BellInequality {
        scenario,
        coefficients: ineq.h.iter().map(rat_to_f64).collect(),
        classical_bound: rat_to_f64(&ineq.c),
    }
}

fn rat_to_f64(r: &Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn f64_to_rat(v: f64, index: usize) -> Result<Rat, FacetError> {
    let r = Ratio::<i128>::approximate_float(v)
        .ok_or(FacetError::NonRationalCoefficient { index, value: v })?;
    if (rat_to_f64(&r) - v).abs() > 1e-9 || *r.denom() > 1_000_000 {
        return Err(FacetError::NonRationalCoefficient { index, value: v });
    }
    Ok(r)
}

/// Generates the full relabeling orbit of a tight inequality, deduplicated
/// in the canonical gauge. Every member is tight with the same spanning
/// vertex count as the seed.
pub fn generate_facet_orbit(canonical: &BellInequality) -> Result<Vec<BellInequality>, FacetError> {
    Ok(facet_orbit_exact(canonical)?
        .1
        .iter()
        .map(|e| exact_to_public(canonical.scenario, e))
        .collect())
}

fn facet_orbit_exact(
    canonical: &BellInequality,
) -> Result<(Vec<DeterministicVertex>, Vec<ExactIneq>), FacetError> {
    let scenario = canonical.scenario;
    let vertices = enumerate_vertices(scenario)?;
    let supports = vertex_supports(&vertices);

    let h: Vec<Rat> = canonical
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, &v)| f64_to_rat(v, i))
        .collect::<Result<_, _>>()?;
    // Tightness precondition on the seed as stated.
    let actual = exact_classical_bound(&h, &supports);
    if (rat_to_f64(&actual) - canonical.classical_bound).abs() > TOL_TIGHT {
        return Err(FacetError::NotTight {
            stated: canonical.classical_bound,
            actual: rat_to_f64(&actual),
        });
    }

    let seed = reduce(&GaugeBasis::new(scenario), h, &supports)?;
    // The gauge space is invariant under relabelings and the projection is
    // orthogonal, so permuting the reduced seed stays in canonical gauge;
    // max-abs scaling and the classical bound carry over unchanged.
    let mut orbit = std::collections::BTreeSet::new();
    for g in Relabeling::enumerate(scenario) {
        let pi = g.permutation(scenario);
        let permuted: Vec<Rat> = pi.iter().map(|&src| seed.h[src]).collect();
        orbit.insert(permuted);
    }
    Ok((
        vertices,
        orbit
            .into_iter()
            .map(|h| ExactIneq { h, c: seed.c })
            .collect(),
    ))
}

/// All facet Bell inequalities of the scenario's local polytope, with
/// class labels and spanning-vertex counts. Supports `[2,2]` (8 CHSH
/// facets) and `[3,2]` (CHSH plus I3322 orbits, 648 facets in total).
pub fn all_facets(scenario: Scenario) -> Result<Vec<Facet>, FacetError> {
    let mut seeds = vec![(canonical_chsh(scenario)?, FacetClass::Chsh)];
    if scenario.settings() == 3 && scenario.outcomes() == 2 {
        seeds.push((canonical_i3322(), FacetClass::I3322));
    }
    let mut facets = Vec::new();
    for (seed, class) in seeds {
        let (vertices, orbit) = facet_orbit_exact(&seed)?;
        let supports = vertex_supports(&vertices);
        for exact in orbit {
            let n_spanning = supports
                .iter()
                .filter(|s| exact_vertex_value(&exact.h, s) == exact.c)
                .count();
            facets.push(Facet {
                inequality: exact_to_public(scenario, &exact),
                n_spanning,
                class,
            });
        }
    }
    Ok(facets)
}

/// Canonical gauge reduction for floating-point coefficient vectors (used
/// to normalize LP separation outputs before they become labels): project
/// out the identity space, scale so `max|h_i| = 1`, recompute the bound by
/// brute force. Returns the reduced `(h, c)`.
pub fn canonicalize_f64(
    gauge: &GaugeBasis,
    h: &[f64],
    vertices: &[DeterministicVertex],
) -> Result<(Vec<f64>, f64), FacetError> {
    if h.len() != gauge.scenario.dim() {
        return Err(FacetError::DimensionMismatch {
            got: h.len(),
            expected: gauge.scenario.dim(),
        });
    }
    let mut out = gauge.project_out_f64(h);
    let max_abs = out.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max_abs < 1e-12 {
        return Err(FacetError::DegenerateInequality);
    }
    for v in out.iter_mut() {
        *v /= max_abs;
    }
    let c = classical_bound(&out, vertices);
    Ok((out, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{dot, Behavior};
    use std::collections::BTreeSet;

    fn s22() -> Scenario {
        Scenario::new(2, 2).unwrap()
    }

    fn s32() -> Scenario {
        Scenario::new(3, 2).unwrap()
    }

    /// Independent brute-force oracle: enumerate deterministic strategies
    /// directly from outcome tables, without `enumerate_vertices`.
    fn oracle_classical_bound(scenario: Scenario, h: &[f64]) -> f64 {
        let (m, k) = (scenario.settings(), scenario.outcomes());
        let mut best = f64::NEG_INFINITY;
        let total = (k as u32).pow(2 * m as u32);
        for code in 0..total {
            let mut digits = Vec::with_capacity(2 * m);
            let mut rem = code as usize;
            for _ in 0..2 * m {
                digits.push(rem % k + 1);
                rem /= k;
            }
            let (alice, bob) = digits.split_at(m);
            let mut value = 0.0;
            for x in 1..=m {
                for y in 1..=m {
                    value += h[scenario.index(alice[x - 1], bob[y - 1], x, y).unwrap()];
                }
            }
            best = best.max(value);
        }
        best
    }

    /// The PR box of the CH facet: outcomes agree on all setting pairs
    /// except (2,2), where they disagree; each case uniform with weight 1/2.
    fn ch_pr_box() -> Behavior {
        let s = s22();
        let mut p = vec![0.0; 16];
        for x in 1..=2 {
            for y in 1..=2 {
                if (x, y) == (2, 2) {
                    p[s.index(1, 2, x, y).unwrap()] = 0.5;
                    p[s.index(2, 1, x, y).unwrap()] = 0.5;
                } else {
                    p[s.index(1, 1, x, y).unwrap()] = 0.5;
                    p[s.index(2, 2, x, y).unwrap()] = 0.5;
                }
            }
        }
        Behavior::new(s, p).unwrap()
    }

    #[test]
    fn chsh_classical_bound_is_zero_by_oracle() {
        let chsh = canonical_chsh(s22()).unwrap();
        let bound = oracle_classical_bound(s22(), &chsh.coefficients);
        assert!((bound - 0.0).abs() < 1e-12, "oracle bound {bound}");
        assert_eq!(chsh.classical_bound, 0.0);
    }

    #[test]
    fn chsh_rejects_more_outcomes() {
        let s = Scenario::new(2, 3).unwrap();
        assert!(matches!(
            canonical_chsh(s),
            Err(FacetError::UnsupportedOutcomes { .. })
        ));
    }

    #[test]
    fn pr_box_reaches_one_half() {
        let chsh = canonical_chsh(s22()).unwrap();
        let value = chsh.value(&ch_pr_box());
        assert!((value - 0.5).abs() < 1e-12, "PR box value {value}");
    }

    #[test]
    fn i3322_classical_bound_is_zero_by_oracle() {
        let ineq = canonical_i3322();
        let bound = oracle_classical_bound(s32(), &ineq.coefficients);
        assert!((bound - 0.0).abs() < 1e-12, "oracle bound {bound}");
        assert_eq!(ineq.classical_bound, 0.0);
    }

    #[test]
    fn chsh_orbit_has_eight_facets() {
        let orbit = generate_facet_orbit(&canonical_chsh(s22()).unwrap()).unwrap();
        assert_eq!(orbit.len(), 8);
    }

    #[test]
    fn chsh_facets_spanned_by_eight_vertices() {
        let vertices = enumerate_vertices(s22()).unwrap();
        for f in generate_facet_orbit(&canonical_chsh(s22()).unwrap()).unwrap() {
            assert_eq!(spanning_vertices(&f, &vertices).len(), 8);
        }
    }

    #[test]
    fn facet_count_32_is_648_in_two_classes() {
        let facets = all_facets(s32()).unwrap();
        let chsh = facets.iter().filter(|f| f.class == FacetClass::Chsh).count();
        let i3322 = facets.iter().filter(|f| f.class == FacetClass::I3322).count();
        assert_eq!(chsh + i3322, 648, "chsh={chsh} i3322={i3322}");
        for f in &facets {
            let expected = match f.class {
                FacetClass::Chsh => 32,
                FacetClass::I3322 => 20,
            };
            assert_eq!(f.n_spanning, expected, "class {:?}", f.class);
        }
    }

    #[test]
    fn i3322_canonical_spanned_by_twenty_vertices() {
        let vertices = enumerate_vertices(s32()).unwrap();
        assert_eq!(spanning_vertices(&canonical_i3322(), &vertices).len(), 20);
    }

    #[test]
    fn orbit_members_are_tight_with_bound_below_vertices() {
        let vertices = enumerate_vertices(s22()).unwrap();
        for f in generate_facet_orbit(&canonical_chsh(s22()).unwrap()).unwrap() {
            assert!(f.is_tight(&vertices, 1e-12));
            for v in &vertices {
                assert!(dot(&f.coefficients, v.behavior()) <= f.classical_bound + 1e-9);
            }
        }
    }

    #[test]
    fn orbit_is_idempotent_from_any_member() {
        let orbit = generate_facet_orbit(&canonical_chsh(s22()).unwrap()).unwrap();
        let again = generate_facet_orbit(&orbit[3]).unwrap();
        let key = |fs: &[BellInequality]| -> BTreeSet<String> {
            fs.iter()
                .map(|f| format!("{:?}", f.coefficients))
                .collect()
        };
        assert_eq!(key(&orbit), key(&again));
    }

    #[test]
    fn orbit_dedup_agrees_with_incidence_dedup() {
        // The gauge-reduction dedup convention must match the geometric one:
        // facets are distinct iff their spanning vertex sets are distinct.
        let vertices = enumerate_vertices(s22()).unwrap();
        let orbit = generate_facet_orbit(&canonical_chsh(s22()).unwrap()).unwrap();
        let incidences: BTreeSet<Vec<usize>> = orbit
            .iter()
            .map(|f| {
                vertices
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| {
                        (dot(&f.coefficients, v.behavior()) - f.classical_bound).abs() <= 1e-9
                    })
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        assert_eq!(incidences.len(), orbit.len());
    }

    #[test]
    fn orbit_rejects_untight_seed() {
        let mut bad = canonical_chsh(s22()).unwrap();
        bad.classical_bound = 0.25;
        assert!(matches!(
            generate_facet_orbit(&bad),
            Err(FacetError::NotTight { .. })
        ));
    }

    #[test]
    fn relabeling_group_is_closed_22() {
        let s = s22();
        let perms: BTreeSet<Vec<usize>> = Relabeling::enumerate(s)
            .iter()
            .map(|g| g.permutation(s))
            .collect();
        assert_eq!(perms.len(), 128);
        let list: Vec<Vec<usize>> = perms.iter().cloned().collect();
        for g in list.iter().take(16) {
            for h in list.iter().step_by(11) {
                let composed: Vec<usize> = (0..16).map(|i| h[g[i]]).collect();
                assert!(perms.contains(&composed), "composition left the group");
            }
        }
    }

    #[test]
    fn relabelings_preserve_tightness_and_spanning_count() {
        let s = s22();
        let vertices = enumerate_vertices(s).unwrap();
        let chsh = canonical_chsh(s).unwrap();
        for g in Relabeling::enumerate(s).iter().step_by(17) {
            let pi = g.permutation(s);
            let h: Vec<f64> = pi.iter().map(|&src| chsh.coefficients[src]).collect();
            let moved = BellInequality::new(s, h, chsh.classical_bound).unwrap();
            assert!(moved.is_tight(&vertices, 1e-12));
            assert_eq!(spanning_vertices(&moved, &vertices).len(), 8);
        }
    }

    #[test]
    fn canonicalize_f64_is_idempotent_and_gauge_invariant() {
        let s = s22();
        let vertices = enumerate_vertices(s).unwrap();
        let gauge = GaugeBasis::new(s);
        let chsh = canonical_chsh(s).unwrap();
        // Scaling and adding a normalization identity must not change the
        // canonical form.
        let mut shifted: Vec<f64> = chsh.coefficients.iter().map(|v| 0.37 * v).collect();
        for i in 0..4 {
            shifted[i] += 0.11;
        }
        let (h1, c1) = canonicalize_f64(&gauge, &shifted, &vertices).unwrap();
        let (h0, c0) = canonicalize_f64(&gauge, &chsh.coefficients, &vertices).unwrap();
        let (h2, c2) = canonicalize_f64(&gauge, &h1, &vertices).unwrap();
        for (a, b) in h1.iter().zip(h0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((c1 - c0).abs() < 1e-12);
        for (a, b) in h1.iter().zip(h2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((c1 - c2).abs() < 1e-12);
        // The violation of the PR box is gauge-independent up to the
        // positive rescale, hence still strictly positive.
        assert!(crate::scenario::dot(&h1, &ch_pr_box()) - c1 > 0.1);
    }
}
