//! Minimum-cost assignment of rows to columns (Hungarian method with potentials).
//!
//! Runs in O(n²·m) for an n×m matrix with n ≤ m; rectangular inputs are handled
//! directly by the shortest-augmenting-path formulation, no padding needed.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `assignment[row] = column`; injective.
    pub assignment: Vec<usize>,
    pub cost: f64,
}

pub fn hungarian(cost: &[Vec<f64>]) -> Result<MatchResult> {
    let n = cost.len();
    if n == 0 {
        return Ok(MatchResult {
            assignment: Vec::new(),
            cost: 0.0,
        });
    }
    let m = cost[0].len();
    if let Some(row) = cost.iter().find(|r| r.len() != m) {
        return Err(Error::Shape(format!("ragged cost matrix: rows of {m} and {}", row.len())));
    }
    if n > m {
        return Err(Error::TooManyRows { rows: n, cols: m });
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("cost matrix contains non-finite values".into()));
    }

    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=m {
                if used[col] {
                    continue;
                }
                let reduced = cost[r - 1][col - 1] - u[r] - v[col];
                if reduced < min_slack[col] {
                    min_slack[col] = reduced;
                    way[col] = col0;
                }
                if min_slack[col] < delta {
                    delta = min_slack[col];
                    col1 = col;
                }
            }
            for col in 0..=m {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_slack[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for col in 1..=m {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
    Ok(MatchResult {
        assignment,
        cost: total,
    })
}
