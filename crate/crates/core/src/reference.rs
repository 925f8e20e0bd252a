//! Published optimal windows per chain length, bundled for side-by-side
//! reporting only.

use std::collections::BTreeMap;

const TABLE: &str = include_str!("../data/table2_reference.csv");

/// Reference windows keyed by node count. The n = 14 row has 13 entries as
/// published.
pub fn reference_windows() -> BTreeMap<usize, Vec<u32>> {
    TABLE
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (n, cws) = line.split_once(',').expect("n,cws row");
            let cws = cws
                .split_whitespace()
                .map(|c| c.parse().expect("integer window"))
                .collect();
            (n.parse().expect("integer n"), cws)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows() {
        let t = reference_windows();
        assert_eq!(t.len(), 11);
        assert_eq!(t[&4], vec![38, 49, 49, 38]);
        assert_eq!(t[&14].len(), 13);
        assert_eq!(t[&24].len(), 24);
        assert!(t.keys().copied().eq((4..=24).step_by(2)));
    }
}
