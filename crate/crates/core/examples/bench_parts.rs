//! Finer timing of the element tangent internals.

use nalgebra::DMatrix;
use std::time::Instant;

fn main() {
    // emulate the element flush: U (27 x 252) * VT (252 x 27)
    let n = 27;
    let cap = 252;
    let u = DMatrix::<f64>::from_fn(n, cap, |i, j| (i * j) as f64 * 1e-4);
    let vt = DMatrix::<f64>::from_fn(cap, n, |i, j| (i + j) as f64 * 1e-4);
    let mut k = DMatrix::<f64>::zeros(n, n);
    let reps = 2560;
    let t0 = Instant::now();
    for _ in 0..reps {
        k.gemm(1.0, &u, &vt, 1.0);
    }
    println!(
        "one fat gemm per element : {:7.2} us/elem",
        t0.elapsed().as_secs_f64() * 1e6 / reps as f64
    );

    // per-qp: 9 x (27 x 28)(28 x 27)
    let u9 = DMatrix::<f64>::from_fn(n, 28, |i, j| (i * j) as f64 * 1e-4);
    let vt9 = DMatrix::<f64>::from_fn(28, n, |i, j| (i + j) as f64 * 1e-4);
    let t0 = Instant::now();
    for _ in 0..reps {
        for _ in 0..9 {
            k.gemm(1.0, &u9, &vt9, 1.0);
        }
    }
    println!(
        "nine small gemms per elem: {:7.2} us/elem",
        t0.elapsed().as_secs_f64() * 1e6 / reps as f64
    );

    // hand-rolled fat variant on raw slices
    let t0 = Instant::now();
    for _ in 0..reps {
        let us = u.as_slice();
        let vs = vt.as_slice(); // column major: vt[(r,c)] = vs[r + cap*c]
        let ks = k.as_mut_slice();
        for c in 0..n {
            for r in 0..n {
                let mut acc = 0.0;
                for t in 0..cap {
                    acc += us[r + n * t] * vs[t + cap * c];
                }
                ks[r + n * c] += acc;
            }
        }
    }
    println!(
        "hand-rolled fat product  : {:7.2} us/elem",
        t0.elapsed().as_secs_f64() * 1e6 / reps as f64
    );
}
