//! Maximum bipartite matching by augmenting paths (Kuhn's algorithm).
//!
//! Vertices are visited in ascending index order, so the matching found is
//! deterministic.

/// Returns the size of a maximum matching and, for each left vertex, its
/// matched right vertex. `adj[l]` lists the right neighbours of `l`.
pub fn max_matching(adj: &[Vec<usize>], n_right: usize) -> (usize, Vec<Option<usize>>) {
    let mut match_right: Vec<Option<usize>> = vec![None; n_right];
    let mut size = 0;
    let mut seen = vec![false; n_right];
    for l in 0..adj.len() {
        seen.iter_mut().for_each(|s| *s = false);
        if augment(l, adj, &mut match_right, &mut seen) {
            size += 1;
        }
    }
    let mut match_left = vec![None; adj.len()];
    for (r, l) in match_right.iter().enumerate() {
        if let Some(l) = *l {
            match_left[l] = Some(r);
        }
    }
    (size, match_left)
}

/// True iff every left vertex can be matched.
pub fn saturates_left(adj: &[Vec<usize>], n_right: usize) -> bool {
    if adj.len() > n_right {
        return false;
    }
    max_matching(adj, n_right).0 == adj.len()
}

fn augment(l: usize, adj: &[Vec<usize>], match_right: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &r in &adj[l] {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        if match_right[r].is_none_or(|other| augment(other, adj, match_right, seen)) {
            match_right[r] = Some(l);
            return true;
        }
    }
    false
}
