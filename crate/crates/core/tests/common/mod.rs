#![allow(dead_code)]

use mcvqe_core::aiem::{MonomerElements, PairList};
use mcvqe_core::sim::{Axis, Circuit, Gate, Observable, PauliString};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Random circuit over the full gate set with `num_params` parameters, each
/// driving exactly one gate (as in the ansatz). Reusing parameters raises the
/// trigonometric frequency and with it the truncation error of the FD oracle.
pub fn random_circuit(rng: &mut ChaCha8Rng, n: usize, num_params: usize) -> Circuit {
    let mut c = Circuit::new(n);
    let ids: Vec<usize> = (0..num_params).map(|_| c.add_param(rng.gen_range(-3.0..3.0))).collect();
    let mut order = ids.clone();
    order.shuffle(rng);
    let pair = |rng: &mut ChaCha8Rng| {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    };
    for p in order {
        if n > 1 && rng.gen_bool(0.5) {
            let (a, b) = pair(rng);
            let g = match rng.gen_range(0..3) {
                0 => Gate::Cnot { control: a, target: b },
                1 => Gate::Cz { a, b },
                _ => Gate::H { qubit: a },
            };
            c.push(g).unwrap();
        }
        if n > 1 && rng.gen_bool(0.3) {
            let (a, b) = pair(rng);
            c.push(Gate::Fy {
                upper: a,
                lower: b,
                param: p,
            })
            .unwrap();
        } else {
            c.push(Gate::Ry {
                qubit: rng.gen_range(0..n),
                param: p,
            })
            .unwrap();
        }
    }
    c
}

pub fn random_observable(rng: &mut ChaCha8Rng, n: usize, terms: usize) -> Observable {
    let axis = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { Axis::X } else { Axis::Z };
    let ops: Vec<(f64, PauliString)> = (0..terms)
        .map(|_| {
            let w = rng.gen_range(-1.0..1.0);
            let a = rng.gen_range(0..n);
            let s = if n > 1 && rng.gen_bool(0.6) {
                let b = (a + rng.gen_range(1..n)) % n;
                PauliString::two(a, axis(rng), b, axis(rng)).unwrap()
            } else {
                PauliString::new(vec![(a, axis(rng))]).unwrap()
            };
            (w, s)
        })
        .collect();
    // unit total weight keeps the fourth derivatives, and so the FD error, bounded
    let norm: f64 = ops.iter().map(|(w, _)| w.abs()).sum();
    let ops = ops.into_iter().map(|(w, s)| (w / norm, s)).collect();
    Observable::new(rng.gen_range(-1.0..1.0), ops)
}

/// Random pair list (closed under swap) and random monomer elements on it.
pub fn random_elements(rng: &mut ChaCha8Rng, n: usize) -> (MonomerElements, PairList) {
    let mut unordered = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if b == a + 1 || rng.gen_bool(0.5) {
                unordered.push((a, b));
            }
        }
    }
    let pairs = PairList::symmetric(n, &unordered).unwrap();
    let mut el = MonomerElements::zeros(n, pairs.len());
    for a in 0..n {
        el.eps_h[a] = rng.gen_range(-0.2..0.2);
        el.eps_p[a] = el.eps_h[a] + rng.gen_range(0.05..0.5);
        el.eps_t[a] = rng.gen_range(-0.05..0.05);
    }
    for b in el.v.iter_mut() {
        for row in b.iter_mut() {
            for x in row.iter_mut() {
                *x = rng.gen_range(-0.05..0.05);
            }
        }
    }
    (el, pairs)
}

/// `max |a − b|` over flattened vectors.
pub fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
