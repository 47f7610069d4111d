//! SDPA sparse format (`.dat-s`) export.
//!
//! A problem `max ⟨C,Y⟩ s.t. ⟨A_i,Y⟩ = b_i, Y ⪰ 0` is written as the dual
//! side of the SDPA pair: `F_0 = C`, `F_i = A_i`, `c = b`, so an external
//! SDPA-family solver's `Y` matches this crate's primal blocks and its dual
//! objective matches this crate's optimum. Minimization problems are
//! exported with the objective negated (noted in the comment header), which
//! keeps the file in the maximization orientation.
//!
//! Format: block sizes on one line (all dense here), one entry per line as
//! `matno block i j value` with 1-based indices and only `i ≤ j` entries.

use super::{SdpProblem, SparseFunctional, Term};
use std::io::{self, Write};

pub fn write_sdpa_sparse<W: Write>(problem: &SdpProblem, out: &mut W) -> io::Result<()> {
    let ncon = problem.constraints.len();
    writeln!(
        out,
        "\"SDPA sparse export{}\"",
        if problem.maximize {
            ""
        } else {
            " (objective negated: source problem minimizes)"
        }
    )?;
    writeln!(out, "{ncon} = mDIM")?;
    writeln!(out, "{} = nBLOCK", problem.block_dims.len())?;
    let dims: Vec<String> = problem.block_dims.iter().map(|d| d.to_string()).collect();
    writeln!(out, "{} = bLOCKsTRUCT", dims.join(" "))?;
    let rhs: Vec<String> = problem
        .constraints
        .iter()
        .map(|(_, b)| format_value(*b))
        .collect();
    writeln!(out, "{}", rhs.join(" "))?;

    let sign = if problem.maximize { 1.0 } else { -1.0 };
    write_functional(out, 0, &problem.objective, sign)?;
    for (idx, (f, _)) in problem.constraints.iter().enumerate() {
        write_functional(out, idx + 1, f, 1.0)?;
    }
    Ok(())
}

fn write_functional<W: Write>(
    out: &mut W,
    matno: usize,
    f: &SparseFunctional,
    scale: f64,
) -> io::Result<()> {
    let mut terms: Vec<&Term> = f.0.iter().collect();
    terms.sort_by_key(|t| (t.block, t.row, t.col));
    for t in terms {
        // Functional coefficients refer to the symmetric entry counted
        // once; SDPA stores matrix entries, so off-diagonal values halve.
        let val = if t.row == t.col {
            t.coeff * scale
        } else {
            t.coeff * scale / 2.0
        };
        if val == 0.0 {
            continue;
        }
        writeln!(
            out,
            "{matno} {} {} {} {}",
            t.block + 1,
            t.row + 1,
            t.col + 1,
            format_value(val)
        )?;
    }
    Ok(())
}

fn format_value(v: f64) -> String {
    // Shortest round-trip decimal; SDPA readers accept plain decimals.
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::SdpProblem;

    #[test]
    fn golden_file_for_small_problem() {
        let mut p = SdpProblem::new(vec![2, 1], true);
        let mut f0 = SparseFunctional::new();
        f0.push(0, 0, 0, 1.0);
        f0.push(1, 0, 0, 1.0);
        p.add_constraint(f0, 1.0);
        let mut f1 = SparseFunctional::new();
        f1.push(0, 0, 1, 1.0); // off-diagonal functional coefficient
        p.add_constraint(f1, 0.5);
        let mut obj = SparseFunctional::new();
        obj.push(0, 1, 1, 2.0);
        p.set_objective(obj);

        let mut buf = Vec::new();
        write_sdpa_sparse(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "\"SDPA sparse export\"\n\
                        2 = mDIM\n\
                        2 = nBLOCK\n\
                        2 1 = bLOCKsTRUCT\n\
                        1 0.5\n\
                        0 1 2 2 2\n\
                        1 1 1 1 1\n\
                        1 2 1 1 1\n\
                        2 1 1 2 0.5\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn minimization_flips_objective_sign() {
        let mut p = SdpProblem::new(vec![1], false);
        let mut f = SparseFunctional::new();
        f.push(0, 0, 0, 1.0);
        p.add_constraint(f.clone(), 1.0);
        p.set_objective(f);
        let mut buf = Vec::new();
        write_sdpa_sparse(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("0 1 1 1 -1"));
        assert!(text.contains("objective negated"));
    }
}
