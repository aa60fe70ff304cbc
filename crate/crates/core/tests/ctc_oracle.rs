mod common;

use common::{labeling_probs, mode_of, random_matrix, rng};
use ctcfuse::ctc::{ctc_gradient, ctc_loss, ctc_loss_bruteforce, min_frames};
use ctcfuse::{CollapseMode, EmissionMatrix};
use rand::Rng;

#[test]
fn forward_matches_enumeration() {
    let mut r = rng(1);
    for i in 0..500 {
        let frames = r.random_range(1..=6);
        let v = r.random_range(2..=4);
        let mode = mode_of(i);
        let m = random_matrix(&mut r, frames, v, 0.0);
        let probs = labeling_probs(&m, mode);
        // one realizable labeling and one arbitrary one
        let keys: Vec<_> = probs.keys().cloned().collect();
        let realizable = keys[r.random_range(0..keys.len())].clone();
        let len = r.random_range(0..=frames);
        let arbitrary: Vec<u32> = (0..len).map(|_| r.random_range(1..v as u32)).collect();
        for reference in [realizable, arbitrary] {
            let brute = ctc_loss_bruteforce(&m, &reference, mode).unwrap();
            let expected = probs.get(&reference).map_or(f64::INFINITY, |p| -p.ln());
            if min_frames(&reference, mode) > frames {
                assert!(ctc_loss(&m, &reference, mode).is_err() || expected.is_infinite());
                assert!(brute.is_infinite());
                continue;
            }
            let fwd = ctc_loss(&m, &reference, mode).unwrap();
            assert!((fwd - brute).abs() <= 1e-8, "{i}: {fwd} vs {brute}");
            assert!((fwd - expected).abs() <= 1e-8, "{i}: {fwd} vs {expected}");
        }
    }
}

#[test]
fn probabilities_sum_to_one_over_labelings() {
    let mut r = rng(2);
    for i in 0..50 {
        let frames = r.random_range(1..=5);
        let v = r.random_range(2..=4);
        let mode = mode_of(i);
        let m = random_matrix(&mut r, frames, v, 0.0);
        // every sequence over the real tokens up to length T
        let mut total = 0.0;
        let mut frontier = vec![Vec::new()];
        for _ in 0..=frames {
            let mut next = Vec::new();
            for y in frontier {
                if min_frames(&y, mode) <= frames {
                    total += (-ctc_loss(&m, &y, mode).unwrap()).exp();
                }
                for k in 1..v as u32 {
                    let mut z = y.clone();
                    z.push(k);
                    if z.len() <= frames {
                        next.push(z);
                    }
                }
            }
            frontier = next;
        }
        assert!((total - 1.0).abs() <= 1e-6, "{i}: {total}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mode = mode_of(i);
        let m = random_matrix(&mut r, 4, 3, 0.0);
        let len = r.random_range(1..=2);
        let reference: Vec<u32> = (0..len).map(|_| r.random_range(1..3)).collect();
        let grad = ctc_gradient(&m, &reference, mode).unwrap();
        for j in 0..m.data().len() {
            let shifted = |d: f64| {
                let mut data = m.data().to_vec();
                data[j] += d;
                ctc_loss(&EmissionMatrix::new(data, 4, 3, 4).unwrap(), &reference, mode).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let scale = grad[j].abs().max(fd.abs());
            if scale > 1e-9 {
                worst = worst.max((grad[j] - fd).abs() / scale);
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn gradient_rows_sum_to_minus_one() {
    let mut r = rng(4);
    for mode in [CollapseMode::Classic, CollapseMode::InsertionOnly] {
        let m = random_matrix(&mut r, 7, 4, 0.5);
        let grad = ctc_gradient(&m, &[1, 1, 2], mode).unwrap();
        for row in grad.chunks(4) {
            assert!((row.iter().sum::<f64>() + 1.0).abs() < 1e-9);
            assert!(row.iter().all(|g| *g <= 0.0 && *g >= -1.0));
        }
    }
}

#[test]
fn unrealizable_repeat_has_no_mass() {
    let m = EmissionMatrix::from_probs(&[vec![0.2, 0.8], vec![0.2, 0.8]], 1).unwrap();
    assert!(ctc_loss(&m, &[1, 1], CollapseMode::Classic).is_err());
    assert!(ctc_loss_bruteforce(&m, &[1, 1], CollapseMode::Classic)
        .unwrap()
        .is_infinite());
    let ins = ctc_loss(&m, &[1, 1], CollapseMode::InsertionOnly).unwrap();
    assert!((ins + 0.64f64.ln()).abs() < 1e-12);
}
