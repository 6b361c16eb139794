//! Reference implementations used by the integration tests.
//!
//! They are deliberately naive and share no code with the library.

#![allow(dead_code)]

use riskmppi::Vec3;

/// Dense Gaussian elimination with full pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for r in k..n {
            for c in k..n {
                if a[r][c].abs() > best {
                    best = a[r][c].abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        assert!(best > 0.0, "singular system");
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        col_perm.swap(k, pc);
        for r in k + 1..n {
            let f = a[r][k] / a[k][k];
            if f != 0.0 {
                for c in k..n {
                    a[r][c] -= f * a[k][c];
                }
                b[r] -= f * b[k];
            }
        }
    }
    let mut y = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[k][c] * y[c];
        }
        y[k] = s / a[k][k];
    }
    let mut x = vec![0.0; n];
    for (k, &c) in col_perm.iter().enumerate() {
        x[c] = y[k];
    }
    x
}

/// Row of `d`-th derivative of `sum a_j t^j` with respect to the six `a_j`.
fn monomial_row(t: f64, d: usize) -> [f64; 6] {
    let mut row = [0.0; 6];
    for (j, slot) in row.iter_mut().enumerate() {
        if j >= d {
            let mut coef = 1.0;
            for m in 0..d {
                coef *= (j - m) as f64;
            }
            *slot = coef * t.powi((j - d) as i32);
        }
    }
    row
}

/// Per-segment monomial coefficients `x_k(s) = sum a_j s^j` (local time) of the
/// two-segment quintic: boundary values, waypoint interpolation and continuity
/// of derivatives one to four at the junction.
#[allow(clippy::too_many_arguments)]
pub fn minjerk_oracle_axis(p0: f64, v0: f64, a0: f64, r1: f64, r2: f64, ve: f64, ae: f64, t: f64) -> [[f64; 6]; 2] {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut push = |seg1: [f64; 6], seg2: [f64; 6], value: f64| {
        let mut r = seg1.to_vec();
        r.extend_from_slice(&seg2);
        rows.push(r);
        rhs.push(value);
    };
    let z = [0.0; 6];
    push(monomial_row(0.0, 0), z, p0);
    push(monomial_row(0.0, 1), z, v0);
    push(monomial_row(0.0, 2), z, a0);
    push(monomial_row(t, 0), z, r1);
    push(z, monomial_row(0.0, 0), r1);
    push(z, monomial_row(t, 0), r2);
    push(z, monomial_row(t, 1), ve);
    push(z, monomial_row(t, 2), ae);
    for d in 1..=4 {
        let mut right = monomial_row(0.0, d);
        for v in right.iter_mut() {
            *v = -*v;
        }
        push(monomial_row(t, d), right, 0.0);
    }
    let x = gauss_solve(rows, rhs);
    let mut out = [[0.0; 6]; 2];
    out[0].copy_from_slice(&x[..6]);
    out[1].copy_from_slice(&x[6..]);
    out
}

/// `d`-th derivative of `sum a_j s^j`.
pub fn monomial_eval(a: &[f64; 6], s: f64, d: usize) -> f64 {
    monomial_row(s, d).iter().zip(a).map(|(r, c)| r * c).sum()
}

/// `d`-th derivative of `sum c_j s^j / j!`, evaluated term by term.
pub fn scaled_eval(c: &[f64; 6], s: f64, d: usize) -> f64 {
    let mut sum = 0.0;
    for j in d..6 {
        let k = j - d;
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        sum += c[j] * s.powi(k as i32) / fact;
    }
    sum
}

/// Exact O(n m) Hausdorff distance.
pub fn brute_hausdorff(a: &[Vec3], b: &[Vec3]) -> f64 {
    let directed = |p: &[Vec3], q: &[Vec3]| {
        let mut worst: f64 = 0.0;
        for x in p {
            let mut best = f64::INFINITY;
            for y in q {
                best = best.min((x - y).norm());
            }
            worst = worst.max(best);
        }
        worst
    };
    directed(a, b).max(directed(b, a))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut m = k;
        while m + 1 < idx.len() && v[idx[m + 1]] == v[idx[k]] {
            m += 1;
        }
        let avg = (k + m) as f64 / 2.0;
        for &i in &idx[k..=m] {
            r[i] = avg;
        }
        k = m + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        num += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    num / (vx * vy).sqrt()
}
