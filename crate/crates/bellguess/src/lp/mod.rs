//! Linear programs of the analysis pipeline: the separating LP that finds
//! the optimal Bell inequality for a behavior, and the no-signaling
//! maximizer (PR box) of a facet inequality.

pub mod simplex;

use crate::facets::{canonicalize_f64, classical_bound, BellInequality, FacetError, GaugeBasis};
use crate::scenario::{dot, Behavior, DeterministicVertex, Scenario, ScenarioError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use simplex::{LinearProgram, LpError, LpStatus, Relation};

/// Positive LP optima below this threshold are treated as "no separation":
/// the behavior is classical or sits on the polytope boundary.
pub const TOL_SEP: f64 = 1e-7;
/// Post-solve separation soundness tolerance over the vertex constraints.
pub const TOL_SOUND: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SeparationError {
    #[error("behavior/vertex scenario mismatch")]
    ScenarioMismatch,
    #[error("vertex list has {got} entries, expected the full {expected}")]
    IncompleteVertexList { got: usize, expected: usize },
    #[error("inequality must be tight over the vertices (stated {stated}, actual {actual})")]
    NotTight { stated: f64, actual: f64 },
    #[error("inequality has fewer than two nonzero coefficients; positivity-type inequalities have no PR box")]
    PositivityType,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Facet(#[from] FacetError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Outcome of the separating LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationStatus {
    /// A separating inequality with strictly positive violation was found.
    Optimal,
    /// The behavior cannot be separated: it is local (or on the boundary).
    LocalBehavior,
    Infeasible,
    NumericalFailure,
}

/// Result of [`find_optimal_bell_inequality`], reported in canonical gauge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Separation {
    pub h: Vec<f64>,
    pub c: f64,
    /// `h·P − c` in canonical gauge; positive iff the behavior is nonlocal.
    pub violation: f64,
    pub status: SeparationStatus,
    /// LP certificate residual (|primal − dual| at the returned basis).
    pub gap: f64,
}

impl Separation {
    fn failed(status: SeparationStatus) -> Self {
        Separation {
            h: Vec::new(),
            c: 0.0,
            violation: 0.0,
            status,
            gap: f64::NAN,
        }
    }

    pub fn inequality(&self, scenario: Scenario) -> Option<BellInequality> {
        match self.status {
            SeparationStatus::Optimal => {
                Some(BellInequality::new(scenario, self.h.clone(), self.c).ok()?)
            }
            _ => None,
        }
    }
}

/// Finds the Bell inequality maximizing `h·P − c` subject to `h·v ≤ c` for
/// every deterministic vertex and `−1 ≤ h_i ≤ 1` (`c` free). The optimal
/// hyperplane is reported in the canonical facet gauge; optima at or below
/// [`TOL_SEP`] mean the behavior is not separable and yield
/// [`SeparationStatus::LocalBehavior`].
pub fn find_optimal_bell_inequality(
    behavior: &Behavior,
    vertices: &[DeterministicVertex],
    gauge: &GaugeBasis,
) -> Result<Separation, SeparationError> {
    let scenario = behavior.scenario();
    if gauge.scenario() != scenario {
        return Err(SeparationError::ScenarioMismatch);
    }
    if vertices.len() as u128 != scenario.vertex_count() {
        return Err(SeparationError::IncompleteVertexList {
            got: vertices.len(),
            expected: scenario.vertex_count() as usize,
        });
    }
    let dim = scenario.dim();

    // Variables: h (box-bounded), then c (free).
    let mut prob = LinearProgram::new(true, dim + 1);
    for j in 0..dim {
        prob.lower[j] = -1.0;
        prob.upper[j] = 1.0;
        prob.objective[j] = behavior.as_slice()[j];
    }
    prob.objective[dim] = -1.0;
    for v in vertices {
        if v.behavior().scenario() != scenario {
            return Err(SeparationError::ScenarioMismatch);
        }
        let mut row: Vec<f64> = v.behavior().as_slice().to_vec();
        row.push(-1.0);
        prob.rows.push((row, Relation::Le, 0.0));
    }

    let sol = simplex::solve(&prob)?;
    if sol.status != LpStatus::Optimal {
        return Ok(Separation::failed(SeparationStatus::NumericalFailure));
    }
    if sol.objective <= TOL_SEP {
        return Ok(Separation::failed(SeparationStatus::LocalBehavior));
    }
    if sol.x[..dim].iter().any(|h| h.abs() > 1.0 + 1e-9) {
        return Ok(Separation::failed(SeparationStatus::NumericalFailure));
    }

    // Canonical gauge for the reported hyperplane; the violation sign is
    // gauge-invariant, only its scale changes.
    let (h, c) = canonicalize_f64(gauge, &sol.x[..dim], vertices)?;
    let violation = dot(&h, behavior) - c;
    // Separation soundness is re-verified directly, independent of the
    // solver's own optimality claim.
    let sound = vertices
        .iter()
        .all(|v| dot(&h, v.behavior()) <= c + TOL_SOUND);
    if !sound || violation <= 0.0 {
        return Ok(Separation::failed(SeparationStatus::NumericalFailure));
    }
    Ok(Separation {
        h,
        c,
        violation,
        status: SeparationStatus::Optimal,
        gap: sol.gap,
    })
}

/// Maximizes `h·P` over the no-signaling polytope and returns the
/// maximizing behavior (a vertex of the polytope; for facet inequalities
/// this is the facet's PR box).
pub fn find_pr_box(
    ineq: &BellInequality,
    vertices: &[DeterministicVertex],
) -> Result<Behavior, SeparationError> {
    let scenario = ineq.scenario;
    let nonzero = ineq
        .coefficients
        .iter()
        .filter(|v| v.abs() > 1e-12)
        .count();
    if nonzero < 2 {
        return Err(SeparationError::PositivityType);
    }
    let actual = classical_bound(&ineq.coefficients, vertices);
    if (actual - ineq.classical_bound).abs() > 1e-9 {
        return Err(SeparationError::NotTight {
            stated: ineq.classical_bound,
            actual,
        });
    }

    let (m, k) = (scenario.settings(), scenario.outcomes());
    let dim = scenario.dim();
    let mut prob = LinearProgram::new(true, dim);
    prob.objective = ineq.coefficients.clone();
    for j in 0..dim {
        prob.lower[j] = 0.0;
        prob.upper[j] = 1.0;
    }
    // Normalization per (x,y).
    for x in 1..=m {
        for y in 1..=m {
            let mut row = vec![0.0; dim];
            for a in 1..=k {
                for b in 1..=k {
                    row[scenario.index(a, b, x, y)?] = 1.0;
                }
            }
            prob.rows.push((row, Relation::Eq, 1.0));
        }
    }
    // No-signaling: a non-redundant selection of marginal identities
    // (adjacent setting pairs, first k-1 outcomes).
    for x in 1..=m {
        for a in 1..k {
            for y in 1..m {
                let mut row = vec![0.0; dim];
                for b in 1..=k {
                    row[scenario.index(a, b, x, y)?] += 1.0;
                    row[scenario.index(a, b, x, y + 1)?] -= 1.0;
                }
                prob.rows.push((row, Relation::Eq, 0.0));
            }
        }
    }
    for y in 1..=m {
        for b in 1..k {
            for x in 1..m {
                let mut row = vec![0.0; dim];
                for a in 1..=k {
                    row[scenario.index(a, b, x, y)?] += 1.0;
                    row[scenario.index(a, b, x + 1, y)?] -= 1.0;
                }
                prob.rows.push((row, Relation::Eq, 0.0));
            }
        }
    }

    let sol = simplex::solve(&prob)?;
    if sol.status != LpStatus::Optimal {
        return Err(SeparationError::Lp(LpError::IterationLimit(sol.iterations)));
    }
    // Snap solver dust so the behavior is exactly feasible.
    let p: Vec<f64> = sol.x.iter().map(|&v| v.max(0.0)).collect();
    Ok(Behavior::new(scenario, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facets::{canonical_chsh, canonical_i3322, generate_facet_orbit};
    use crate::scenario::enumerate_vertices;

    fn setup22() -> (Scenario, Vec<DeterministicVertex>, GaugeBasis) {
        let s = Scenario::new(2, 2).unwrap();
        let v = enumerate_vertices(s).unwrap();
        let g = GaugeBasis::new(s);
        (s, v, g)
    }

    fn ch_pr_box(s: Scenario) -> Behavior {
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
    fn pr_box_separation_recovers_the_chsh_facet() {
        let (s, vertices, gauge) = setup22();
        let pr = ch_pr_box(s);
        let sep = find_optimal_bell_inequality(&pr, &vertices, &gauge).unwrap();
        assert_eq!(sep.status, SeparationStatus::Optimal);
        assert!(sep.violation > 0.0);
        assert!(sep.gap < 1e-8);
        // The canonical hyperplane must be one of the eight CHSH facets —
        // namely the one the PR box maximizes.
        let chsh = canonical_chsh(s).unwrap();
        let (hc, cc) = canonicalize_f64(&gauge, &chsh.coefficients, &vertices).unwrap();
        for (a, b) in sep.h.iter().zip(hc.iter()) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert!((sep.c - cc).abs() < 1e-7);
        // Violation in canonical gauge: the CH-form violation 1/2 rescaled
        // by the gauge reduction of the CH vector.
        let expected = dot(&hc, &pr) - cc;
        assert!((sep.violation - expected).abs() < 1e-7);
        assert!(sep.violation > 0.0);
    }

    #[test]
    fn vertices_and_uniform_are_local() {
        let (s, vertices, gauge) = setup22();
        for v in &vertices {
            let sep = find_optimal_bell_inequality(v.behavior(), &vertices, &gauge).unwrap();
            assert_eq!(sep.status, SeparationStatus::LocalBehavior);
        }
        let sep =
            find_optimal_bell_inequality(&Behavior::uniform(s), &vertices, &gauge).unwrap();
        assert_eq!(sep.status, SeparationStatus::LocalBehavior);
    }

    #[test]
    fn separation_soundness_on_mixtures() {
        let (s, vertices, gauge) = setup22();
        let pr = ch_pr_box(s);
        let uniform = Behavior::uniform(s);
        for i in 0..10 {
            let w = 0.5 + 0.05 * i as f64;
            let b = Behavior::mixture(&[(w, &pr), (1.0 - w, &uniform)]).unwrap();
            let sep = find_optimal_bell_inequality(&b, &vertices, &gauge).unwrap();
            if sep.status == SeparationStatus::Optimal {
                for v in &vertices {
                    assert!(dot(&sep.h, v.behavior()) <= sep.c + TOL_SOUND);
                }
                assert!(sep.violation > 0.0);
            }
        }
    }

    #[test]
    fn violation_grows_toward_the_pr_box() {
        // Scale robustness: moving the isotropic mixture toward the PR box
        // monotonically increases the canonical violation.
        let (s, vertices, gauge) = setup22();
        let pr = ch_pr_box(s);
        let uniform = Behavior::uniform(s);
        let mut last = 0.0;
        for i in 1..8 {
            let w = 0.72 + 0.04 * i as f64;
            let b = Behavior::mixture(&[(w, &pr), (1.0 - w, &uniform)]).unwrap();
            let sep = find_optimal_bell_inequality(&b, &vertices, &gauge).unwrap();
            assert_eq!(sep.status, SeparationStatus::Optimal);
            assert!(
                sep.violation > last,
                "violation {} did not grow past {last}",
                sep.violation
            );
            last = sep.violation;
        }
    }

    #[test]
    fn ch_pr_box_from_lp_matches_known_structure() {
        let (s, vertices, _) = setup22();
        let chsh = canonical_chsh(s).unwrap();
        let pr = find_pr_box(&chsh, &vertices).unwrap();
        let value = dot(&chsh.coefficients, &pr);
        assert!((value - 0.5).abs() < 1e-9, "NS maximum {value}");
        for &v in pr.as_slice() {
            assert!(v.abs() < 1e-9 || (v - 0.5).abs() < 1e-9, "entry {v}");
        }
        let (ok, residual) = pr.check_no_signaling(1e-9);
        assert!(ok, "residual {residual}");
    }

    #[test]
    fn orbit_pr_boxes_all_violate() {
        let (s, vertices, _) = setup22();
        for f in generate_facet_orbit(&canonical_chsh(s).unwrap()).unwrap() {
            let pr = find_pr_box(&f, &vertices).unwrap();
            assert!(dot(&f.coefficients, &pr) > f.classical_bound + 0.1);
        }
    }

    #[test]
    fn i3322_pr_box_exceeds_classical_bound() {
        let s = Scenario::new(3, 2).unwrap();
        let vertices = enumerate_vertices(s).unwrap();
        let ineq = canonical_i3322();
        let pr = find_pr_box(&ineq, &vertices).unwrap();
        let value = dot(&ineq.coefficients, &pr);
        assert!(
            value > ineq.classical_bound + 1e-6,
            "NS value {value} vs bound {}",
            ineq.classical_bound
        );
        let (ok, _) = pr.check_no_signaling(1e-9);
        assert!(ok);
    }

    #[test]
    fn positivity_inequality_rejected() {
        let (s, vertices, _) = setup22();
        let mut h = vec![0.0; 16];
        h[3] = -1.0;
        let ineq = BellInequality::new(s, h, 0.0).unwrap();
        assert!(matches!(
            find_pr_box(&ineq, &vertices),
            Err(SeparationError::PositivityType)
        ));
    }

    #[test]
    fn untight_inequality_rejected() {
        let (s, vertices, _) = setup22();
        let mut bad = canonical_chsh(s).unwrap();
        bad.classical_bound = -5.0;
        assert!(matches!(
            find_pr_box(&bad, &vertices),
            Err(SeparationError::NotTight { .. })
        ));
    }
}
