//! Bell-scenario data model: the `[m,k]` scenario, behaviors (joint
//! conditional probability tables), validity checks, and deterministic
//! local-vertex enumeration.
//!
//! A behavior is stored as a flat vector of length `m²k²` in the fixed
//! layout `idx(a,b,x,y) = ((x-1)·m + (y-1))·k² + (a-1)·k + (b-1)` with
//! 1-based outcome/setting labels in the API and 0-based storage.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entries may dip this far below zero before a behavior is rejected.
pub const TOL_POS: f64 = 1e-12;
/// Per-(x,y) normalization must hold to this absolute tolerance.
pub const TOL_NORM: f64 = 1e-9;
/// Default tolerance for the no-signaling marginal check.
pub const TOL_NS: f64 = 1e-9;

/// Enumerating more vertices than this is rejected as a capacity error.
pub const MAX_VERTICES: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario requires m >= 2 and k >= 2, got m={m}, k={k}")]
    InvalidParams { m: usize, k: usize },
    #[error("coordinate out of range: a={a}, b={b}, x={x}, y={y} for [{m},{k}] scenario")]
    CoordinateOutOfRange {
        a: usize,
        b: usize,
        x: usize,
        y: usize,
        m: usize,
        k: usize,
    },
    #[error("behavior vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("behavior entry {index} is {value}, below the positivity tolerance")]
    NegativeEntry { index: usize, value: f64 },
    #[error("behavior block (x={x}, y={y}) sums to {sum}, violating normalization")]
    NotNormalized { x: usize, y: usize, sum: f64 },
    #[error("scenario has {count} vertices, above the enumeration cap of {cap}")]
    CapacityExceeded { count: u128, cap: u128 },
    #[error("outcome map has length {got}, expected {expected} with values in 1..={k}")]
    InvalidMap { got: usize, expected: usize, k: usize },
}

/// A bipartite `[m,k]` Bell scenario: each party has `m` measurement
/// settings with `k` outcomes per setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scenario {
    m: usize,
    k: usize,
}

impl Scenario {
    pub fn new(m: usize, k: usize) -> Result<Self, ScenarioError> {
        if m < 2 || k < 2 {
            return Err(ScenarioError::InvalidParams { m, k });
        }
        Ok(Self { m, k })
    }

    pub fn settings(&self) -> usize {
        self.m
    }

    pub fn outcomes(&self) -> usize {
        self.k
    }

    /// Length of the behavior vector, `m²k²`.
    pub fn dim(&self) -> usize {
        self.m * self.m * self.k * self.k
    }

    /// Number of deterministic local vertices, `k^(2m)`.
    pub fn vertex_count(&self) -> u128 {
        (self.k as u128).pow(2 * self.m as u32)
    }

    /// Flat index of `P(ab|xy)` with 1-based labels.
    pub fn index(&self, a: usize, b: usize, x: usize, y: usize) -> Result<usize, ScenarioError> {
        let (m, k) = (self.m, self.k);
        if a < 1 || a > k || b < 1 || b > k || x < 1 || x > m || y < 1 || y > m {
            return Err(ScenarioError::CoordinateOutOfRange { a, b, x, y, m, k });
        }
        Ok(((x - 1) * m + (y - 1)) * k * k + (a - 1) * k + (b - 1))
    }

    /// Inverse of [`Scenario::index`]: recovers `(a, b, x, y)`.
    pub fn decode(&self, idx: usize) -> Result<(usize, usize, usize, usize), ScenarioError> {
        if idx >= self.dim() {
            return Err(ScenarioError::DimensionMismatch {
                got: idx,
                expected: self.dim(),
            });
        }
        let (m, k) = (self.m, self.k);
        let block = idx / (k * k);
        let inner = idx % (k * k);
        Ok((inner / k + 1, inner % k + 1, block / m + 1, block % m + 1))
    }
}

// Wire format: a scenario is the pair [m, k].
impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(2)?;
        t.serialize_element(&self.m)?;
        t.serialize_element(&self.k)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairVisitor;
        impl<'de> Visitor<'de> for PairVisitor {
            type Value = Scenario;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a [m, k] pair")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Scenario, A::Error> {
                let m: usize = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let k: usize = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                Scenario::new(m, k).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_tuple(2, PairVisitor)
    }
}

/// The full table of joint conditional probabilities `P(ab|xy)`.
///
/// Immutable after construction; construction validates positivity and
/// per-(x,y) normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    p: Vec<f64>,
}

impl Behavior {
    pub fn new(scenario: Scenario, p: Vec<f64>) -> Result<Self, ScenarioError> {
        if p.len() != scenario.dim() {
            return Err(ScenarioError::DimensionMismatch {
                got: p.len(),
                expected: scenario.dim(),
            });
        }
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || v < -TOL_POS {
                return Err(ScenarioError::NegativeEntry { index: i, value: v });
            }
        }
        let (m, k) = (scenario.m, scenario.k);
        for x in 1..=m {
            for y in 1..=m {
                let mut sum = 0.0;
                for a in 1..=k {
                    for b in 1..=k {
                        sum += p[scenario.index(a, b, x, y).unwrap()];
                    }
                }
                if (sum - 1.0).abs() > TOL_NORM {
                    return Err(ScenarioError::NotNormalized { x, y, sum });
                }
            }
        }
        Ok(Self { scenario, p })
    }

    /// The maximally mixed behavior `P(ab|xy) = 1/k²`.
    pub fn uniform(scenario: Scenario) -> Self {
        let v = 1.0 / (scenario.k * scenario.k) as f64;
        Self {
            scenario,
            p: vec![v; scenario.dim()],
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn value(&self, a: usize, b: usize, x: usize, y: usize) -> Result<f64, ScenarioError> {
        Ok(self.p[self.scenario.index(a, b, x, y)?])
    }

    /// Alice's marginal `P(a|x)`, averaged over Bob's settings.
    pub fn alice_marginal(&self, a: usize, x: usize) -> Result<f64, ScenarioError> {
        let m = self.scenario.m;
        let mut total = 0.0;
        for y in 1..=m {
            for b in 1..=self.scenario.k {
                total += self.value(a, b, x, y)?;
            }
        }
        Ok(total / m as f64)
    }

    /// Bob's marginal `P(b|y)`, averaged over Alice's settings.
    pub fn bob_marginal(&self, b: usize, y: usize) -> Result<f64, ScenarioError> {
        let m = self.scenario.m;
        let mut total = 0.0;
        for x in 1..=m {
            for a in 1..=self.scenario.k {
                total += self.value(a, b, x, y)?;
            }
        }
        Ok(total / m as f64)
    }

    /// Largest absolute marginal mismatch over all setting pairs.
    ///
    /// Zero exactly when the behavior is no-signaling: Alice's outcome
    /// marginals must not depend on Bob's setting choice and vice versa.
    pub fn no_signaling_residual(&self) -> f64 {
        let (m, k) = (self.scenario.m, self.scenario.k);
        let mut worst = 0.0f64;
        // Alice: sum over b of P(ab|xy) must agree across y.
        for x in 1..=m {
            for a in 1..=k {
                for y in 1..m {
                    let lhs: f64 = (1..=k).map(|b| self.value(a, b, x, y).unwrap()).sum();
                    let rhs: f64 = (1..=k).map(|b| self.value(a, b, x, y + 1).unwrap()).sum();
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        // Bob: sum over a of P(ab|xy) must agree across x.
        for y in 1..=m {
            for b in 1..=k {
                for x in 1..m {
                    let lhs: f64 = (1..=k).map(|a| self.value(a, b, x, y).unwrap()).sum();
                    let rhs: f64 = (1..=k).map(|a| self.value(a, b, x + 1, y).unwrap()).sum();
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        worst
    }

    /// No-signaling check: `true` iff every marginal mismatch is within
    /// `tol`. Also returns the largest residual found.
    pub fn check_no_signaling(&self, tol: f64) -> (bool, f64) {
        let r = self.no_signaling_residual();
        (r <= tol, r)
    }

    /// Convex mixture `Σ wᵢ·Pᵢ / Σ wᵢ` of behaviors over one scenario.
    pub fn mixture(terms: &[(f64, &Behavior)]) -> Result<Self, ScenarioError> {
        assert!(!terms.is_empty(), "mixture of zero behaviors");
        let scenario = terms[0].1.scenario;
        let total: f64 = terms.iter().map(|(w, _)| *w).sum();
        let mut p = vec![0.0; scenario.dim()];
        for (w, beh) in terms {
            if beh.scenario != scenario {
                return Err(ScenarioError::DimensionMismatch {
                    got: beh.scenario.dim(),
                    expected: scenario.dim(),
                });
            }
            for (acc, v) in p.iter_mut().zip(beh.p.iter()) {
                *acc += w * v;
            }
        }
        for v in p.iter_mut() {
            *v /= total;
        }
        Behavior::new(scenario, p)
    }
}

/// A deterministic local strategy: each party answers a fixed outcome per
/// setting. These are the vertices of the local polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicVertex {
    alice_map: Vec<usize>,
    bob_map: Vec<usize>,
    behavior: Behavior,
}

impl DeterministicVertex {
    /// Builds the vertex for outcome tables `alice_map[x-1]`, `bob_map[y-1]`
    /// (1-based outcome values).
    pub fn from_maps(
        scenario: Scenario,
        alice_map: Vec<usize>,
        bob_map: Vec<usize>,
    ) -> Result<Self, ScenarioError> {
        let (m, k) = (scenario.m, scenario.k);
        for map in [&alice_map, &bob_map] {
            if map.len() != m || map.iter().any(|&o| o < 1 || o > k) {
                return Err(ScenarioError::InvalidMap {
                    got: map.len(),
                    expected: m,
                    k,
                });
            }
        }
        let mut p = vec![0.0; scenario.dim()];
        for x in 1..=m {
            for y in 1..=m {
                let idx = scenario.index(alice_map[x - 1], bob_map[y - 1], x, y)?;
                p[idx] = 1.0;
            }
        }
        Ok(Self {
            alice_map,
            bob_map,
            behavior: Behavior { scenario, p },
        })
    }

    pub fn alice_map(&self) -> &[usize] {
        &self.alice_map
    }

    pub fn bob_map(&self) -> &[usize] {
        &self.bob_map
    }

    pub fn behavior(&self) -> &Behavior {
        &self.behavior
    }
}

/// Enumerates all `k^(2m)` deterministic vertices in lexicographic order of
/// `(alice_map, bob_map)` (all-ones maps first).
pub fn enumerate_vertices(scenario: Scenario) -> Result<Vec<DeterministicVertex>, ScenarioError> {
    let count = scenario.vertex_count();
    if count > MAX_VERTICES {
        return Err(ScenarioError::CapacityExceeded {
            count,
            cap: MAX_VERTICES,
        });
    }
    let (m, k) = (scenario.m, scenario.k);
    let mut vertices = Vec::with_capacity(count as usize);
    let mut maps = vec![1usize; 2 * m]; // alice_map ++ bob_map
    loop {
        let (alice, bob) = maps.split_at(m);
        vertices.push(DeterministicVertex::from_maps(
            scenario,
            alice.to_vec(),
            bob.to_vec(),
        )?);
        // Odometer increment, last position fastest, so the overall order is
        // lexicographic in the concatenated map tuple.
        let mut pos = 2 * m;
        loop {
            if pos == 0 {
                return Ok(vertices);
            }
            pos -= 1;
            if maps[pos] < k {
                maps[pos] += 1;
                break;
            }
            maps[pos] = 1;
        }
    }
}

/// Dot product of a coefficient vector with a behavior, `Σ h_i P_i`.
pub fn dot(h: &[f64], behavior: &Behavior) -> f64 {
    h.iter().zip(behavior.as_slice()).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s22() -> Scenario {
        Scenario::new(2, 2).unwrap()
    }

    #[test]
    fn index_corners() {
        let s = s22();
        assert_eq!(s.index(1, 1, 1, 1).unwrap(), 0);
        assert_eq!(s.index(2, 2, 2, 2).unwrap(), 15);
        assert_eq!(s.index(1, 2, 2, 1).unwrap(), 9);
    }

    #[test]
    fn index_rejects_out_of_range() {
        let s = s22();
        assert!(s.index(0, 1, 1, 1).is_err());
        assert!(s.index(1, 3, 1, 1).is_err());
        assert!(s.index(1, 1, 3, 1).is_err());
    }

    #[test]
    fn decode_round_trips() {
        for (m, k) in [(2, 2), (3, 2), (2, 3)] {
            let s = Scenario::new(m, k).unwrap();
            for idx in 0..s.dim() {
                let (a, b, x, y) = s.decode(idx).unwrap();
                assert_eq!(s.index(a, b, x, y).unwrap(), idx);
            }
        }
    }

    #[test]
    fn scenario_rejects_degenerate() {
        assert!(Scenario::new(1, 2).is_err());
        assert!(Scenario::new(2, 1).is_err());
    }

    #[test]
    fn vertex_counts() {
        assert_eq!(s22().vertex_count(), 16);
        assert_eq!(Scenario::new(3, 2).unwrap().vertex_count(), 64);
        assert_eq!(enumerate_vertices(s22()).unwrap().len(), 16);
        assert_eq!(
            enumerate_vertices(Scenario::new(3, 2).unwrap()).unwrap().len(),
            64
        );
    }

    #[test]
    fn first_vertex_is_all_ones() {
        let vs = enumerate_vertices(s22()).unwrap();
        assert_eq!(vs[0].alice_map(), &[1, 1]);
        assert_eq!(vs[0].bob_map(), &[1, 1]);
        for x in 1..=2 {
            for y in 1..=2 {
                assert_eq!(vs[0].behavior().value(1, 1, x, y).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn vertices_distinct_and_no_signaling() {
        let vs = enumerate_vertices(s22()).unwrap();
        for (i, v) in vs.iter().enumerate() {
            let (ok, residual) = v.behavior().check_no_signaling(0.0);
            assert!(ok, "vertex {i} signals with residual {residual}");
            for w in vs.iter().skip(i + 1) {
                assert_ne!(v.behavior().as_slice(), w.behavior().as_slice());
            }
        }
    }

    #[test]
    fn uniform_behavior_is_no_signaling() {
        let u = Behavior::uniform(s22());
        let (ok, r) = u.check_no_signaling(TOL_NS);
        assert!(ok);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn signaling_behavior_detected() {
        // P(11|11)=1 and P(22|12)=1: Alice's x=1 marginal depends on y.
        let s = s22();
        let mut p = vec![0.0; 16];
        p[s.index(1, 1, 1, 1).unwrap()] = 1.0;
        p[s.index(2, 2, 1, 2).unwrap()] = 1.0;
        p[s.index(1, 1, 2, 1).unwrap()] = 1.0;
        p[s.index(1, 1, 2, 2).unwrap()] = 1.0;
        let b = Behavior::new(s, p).unwrap();
        let (ok, residual) = b.check_no_signaling(TOL_NS);
        assert!(!ok);
        assert_eq!(residual, 1.0);
    }

    #[test]
    fn behavior_validation() {
        let s = s22();
        assert!(Behavior::new(s, vec![0.0; 15]).is_err());
        let mut p = vec![1.0 / 16.0; 16];
        p[0] = -1e-6;
        p[1] += 1e-6;
        assert!(matches!(
            Behavior::new(s, p),
            Err(ScenarioError::NegativeEntry { .. })
        ));
        let p = vec![0.1; 16];
        assert!(matches!(
            Behavior::new(s, p),
            Err(ScenarioError::NotNormalized { .. })
        ));
    }

    #[test]
    fn capacity_guard() {
        // [13,2] has 2^26 ≈ 6.7e7 vertices, above the cap.
        let s = Scenario::new(13, 2).unwrap();
        assert!(matches!(
            enumerate_vertices(s),
            Err(ScenarioError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn scenario_serde_is_pair() {
        let s = Scenario::new(3, 2).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[3,2]");
        let back: Scenario = serde_json::from_str("[3,2]").unwrap();
        assert_eq!(back, s);
    }
}
