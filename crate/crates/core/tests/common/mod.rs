#![allow(dead_code)]

use std::collections::HashSet;

use bondnet::{
    build_network, Bond, EquilibriumProblem, LawTable, MaterialLaw, Network, NodeId, Partition,
    Vec3,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random connected network: a random spanning tree plus extra bonds,
/// nodes scattered in a unit-ish box with a minimum separation.
pub fn random_network<R: Rng>(rng: &mut R, n: usize) -> Network {
    let mut positions: Vec<Vec3> = Vec::with_capacity(n);
    while positions.len() < n {
        let p = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if positions.iter().all(|q| (p - q).norm() > 0.1) {
            positions.push(p);
        }
    }
    let mut seen = HashSet::new();
    let mut bonds = Vec::new();
    let mut push = |a: usize, b: usize, bonds: &mut Vec<Bond>| {
        if a != b && seen.insert((a.min(b), a.max(b))) {
            bonds.push(Bond::new(a, b));
        }
    };
    for i in 1..n {
        let j = rng.gen_range(0..i);
        // random orientation
        if rng.gen_bool(0.5) {
            push(i, j, &mut bonds);
        } else {
            push(j, i, &mut bonds);
        }
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        push(a, b, &mut bonds);
    }
    build_network(positions, bonds).unwrap()
}

/// Problem with 1-3 random prescribed nodes held at their reference positions.
pub fn random_problem<R: Rng>(rng: &mut R, net: Network, law: MaterialLaw) -> EquilibriumProblem {
    let n = net.node_count();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let q = rng.gen_range(1..=3.min(n - 1));
    let prescribed = ids[..q].iter().map(|&i| NodeId(i)).collect();
    let part = Partition::from_prescribed(n, prescribed).unwrap();
    let loads = (0..n - q)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ) * 0.01
        })
        .collect();
    let m = net.bond_count();
    EquilibriumProblem::clamped(net, LawTable::uniform(law, m), part, loads).unwrap()
}

pub fn perturbed<R: Rng>(rng: &mut R, x: &[Vec3], amp: f64) -> Vec<Vec3> {
    x.iter()
        .map(|p| {
            p + Vec3::new(
                rng.gen_range(-amp..amp),
                rng.gen_range(-amp..amp),
                rng.gen_range(-amp..amp),
            )
        })
        .collect()
}

/// Direct evaluation of the symmetric trilinear curve.
pub fn trilinear_oracle(k: f64, ey: f64, h: f64, ef: f64, e: f64) -> f64 {
    let a = e.abs();
    let mag = if a <= ey {
        k * a
    } else if a <= ef {
        k * ey + h * k * (a - ey)
    } else {
        0.0
    };
    mag * e.signum()
}

/// Per-bond force accumulation straight from endpoint positions.
pub fn brute_force_nodal(
    reference: &[Vec3],
    positions: &[Vec3],
    bonds: &[Bond],
    f: impl Fn(f64) -> f64,
) -> Vec<Vec3> {
    let dist =
        |p: Vec3, q: Vec3| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
    let mut nodal = vec![Vec3::zeros(); positions.len()];
    for b in bonds {
        let rest = dist(reference[b.start.0], reference[b.end.0]);
        let s = positions[b.start.0];
        let e = positions[b.end.0];
        let dx = s.x - e.x;
        let dy = s.y - e.y;
        let dz = s.z - e.z;
        let len = (dx * dx + dy * dy + dz * dz).sqrt();
        let mag = f(len - rest);
        let force = Vec3::new(dx, dy, dz) * (mag / len);
        nodal[b.start.0] += force;
        nodal[b.end.0] -= force;
    }
    nodal
}
