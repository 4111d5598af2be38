#![allow(dead_code)]

use formlab::gausscore::all_permutations;
use formlab::permgmm::Regime;
use formlab::simlab::{simulate, GeneratorSpec};
use formlab::{Formation, NormalizedFrame, Permutation, RegimeModel, RoleGaussian};

/// Roles on a grid with `support` permutations: identity, then transpositions
/// of neighbouring roles, then all permutations of the first three roles.
pub fn model(d: usize, support: usize) -> RegimeModel {
    let roles = (0..d)
        .map(|k| RoleGaussian::new([2.0 * (k % 4) as f64, 2.0 * (k / 4) as f64], [[0.6, 0.1], [0.1, 0.5]]))
        .collect();
    let mut perms = vec![Permutation::identity(d)];
    perms.extend((0..d - 1).map(|k| Permutation::transposition(d, k, k + 1)));
    for p in all_permutations(3) {
        let mut map: Vec<usize> = (0..d).collect();
        map[..3].copy_from_slice(p.map());
        let q = Permutation::new(map).unwrap();
        if !perms.contains(&q) {
            perms.push(q);
        }
    }
    perms.truncate(support);
    let n = perms.len();
    let mut weights = vec![0.3 / (n.max(2) - 1) as f64; n];
    weights[0] = if n == 1 { 1.0 } else { 0.7 };
    RegimeModel::new(
        perms,
        vec![Regime {
            v: 1.0,
            formation: Formation::new(roles),
            weights,
        }],
    )
    .unwrap()
}

pub fn frames(model: &RegimeModel, n: usize) -> Vec<NormalizedFrame> {
    simulate(&GeneratorSpec {
        model: model.clone(),
        n,
        seed: 17,
    })
    .unwrap()
    .frames
}
