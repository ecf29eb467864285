//! Brute-force view selection.

use std::collections::BTreeSet;

use nl2bi_core::catalog::Catalog;

/// Enumerates every view, keeps those whose physical and virtual names
/// contain the request, and returns the one with the fewest physical
/// columns, ties going to the smallest id.
pub fn brute_force_select(catalog: &Catalog, required: &BTreeSet<String>) -> Option<String> {
    let mut covering: Vec<(usize, String)> = Vec::new();
    for v in catalog.views() {
        let mut names = BTreeSet::new();
        for c in &v.columns {
            names.insert(c.name.as_str());
        }
        for c in &v.virtual_columns {
            names.insert(c.name.as_str());
        }
        if required.iter().all(|r| names.contains(r.as_str())) {
            covering.push((v.columns.len(), v.view_id.clone()));
        }
    }
    covering.sort();
    covering.into_iter().next().map(|(_, id)| id)
}

/// Pairs of distinct views that jointly cover the request, by brute force.
pub fn brute_force_pairs(
    catalog: &Catalog,
    required: &BTreeSet<String>,
) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for a in catalog.views() {
        for b in catalog.views() {
            if a.view_id < b.view_id && required.iter().all(|r| a.covers(r) || b.covers(r)) {
                out.insert((a.view_id.clone(), b.view_id.clone()));
            }
        }
    }
    out
}
