//! Hand-coded evaluation of the four one-step maps for the example1 problem,
//! written directly from the scheme definitions with fixed-size arrays.

#![allow(dead_code, clippy::needless_range_loop)]

pub type V2 = [f64; 2];
pub type M2 = [[f64; 2]; 2];

pub const A0: M2 = [[-0.1, 0.03], [-0.2, -0.04]];
pub const B: [M2; 2] = [[[0.05, 0.04], [0.02, 0.03]], [[0.05, 0.03], [0.04, 0.01]]];

pub fn mv(a: &M2, x: &V2) -> V2 {
    [
        a[0][0] * x[0] + a[0][1] * x[1],
        a[1][0] * x[0] + a[1][1] * x[1],
    ]
}

fn mm(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn madd(a: &M2, b: &M2, s: f64) -> M2 {
    [
        [a[0][0] + s * b[0][0], a[0][1] + s * b[0][1]],
        [a[1][0] + s * b[1][0], a[1][1] + s * b[1][1]],
    ]
}

pub fn vadd(a: &V2, b: &V2, s: f64) -> V2 {
    [a[0] + s * b[0], a[1] + s * b[1]]
}

pub fn expm_taylor(a: &M2) -> M2 {
    let mut result = [[1.0, 0.0], [0.0, 1.0]];
    let mut term = result;
    for k in 1..40 {
        term = mm(&term, a);
        term = madd(&[[0.0; 2]; 2], &term, 1.0 / k as f64);
        result = madd(&result, &term, 1.0);
    }
    result
}

pub fn f_ex(x: &V2) -> V2 {
    [x[0].sin() / 5.0, x[1].cos() / 5.0]
}

pub fn g_ex(j: usize, x: &V2, y: &V2, z: &V2) -> V2 {
    let e = |v: f64| (-v * v).exp();
    if j == 0 {
        [(z[0] - y[0]) / 3.0, (y[1] - z[1]) / 3.0]
    } else {
        [
            (e(x[1]) + e(y[0]) + e(y[1])) / 10.0,
            (e(x[0]) + e(z[0]) + e(z[1])) / 10.0,
        ]
    }
}

fn de(v: f64) -> f64 {
    -2.0 * v * (-v * v).exp() / 10.0
}

pub fn jac_x(j: usize, x: &V2) -> M2 {
    if j == 0 {
        [[0.0; 2]; 2]
    } else {
        [[0.0, de(x[1])], [de(x[0]), 0.0]]
    }
}

/// Jacobian of g_j in its delay-k argument.
pub fn jac_d(j: usize, k: usize, y: &V2, z: &V2) -> M2 {
    match (j, k) {
        (0, 0) => [[-1.0 / 3.0, 0.0], [0.0, 1.0 / 3.0]],
        (0, _) => [[1.0 / 3.0, 0.0], [0.0, -1.0 / 3.0]],
        (_, 0) => [[de(y[0]), de(y[1])], [0.0, 0.0]],
        _ => [[0.0, 0.0], [de(z[0]), de(z[1])]],
    }
}

pub struct OneStep {
    pub t: f64,
    pub x: V2,
    pub d: [V2; 2],
    pub dd: [[V2; 2]; 2],
    pub h: f64,
    pub dw: V2,
    pub i: M2,
    pub itau: [M2; 2],
    pub i_j0: V2,
    pub i_0j: V2,
    pub active: [bool; 2],
}

fn delayed_sum(p: &OneStep) -> V2 {
    let mut out = [0.0; 2];
    for k in 0..2 {
        if !p.active[k] {
            continue;
        }
        let yk = p.d[k];
        let (y2, z2) = (p.dd[k][0], p.dd[k][1]);
        for j in 0..2 {
            let jac = jac_d(j, k, &p.d[0], &p.d[1]);
            for i in 0..2 {
                let inner = vadd(&mv(&B[i], &yk), &g_ex(i, &yk, &y2, &z2), 1.0);
                out = vadd(&out, &mv(&jac, &inner), p.itau[k][i][j]);
            }
        }
    }
    out
}

pub fn oracle(family: &str, p: &OneStep) -> V2 {
    let (x, y, z) = (&p.x, &p.d[0], &p.d[1]);
    let g = [g_ex(0, x, y, z), g_ex(1, x, y, z)];
    let b = [
        vadd(&mv(&B[0], x), &g[0], 1.0),
        vadd(&mv(&B[1], x), &g[1], 1.0),
    ];
    let em = {
        let mut out = vadd(x, &vadd(&mv(&A0, x), &f_ex(x), 1.0), p.h);
        for j in 0..2 {
            out = vadd(&out, &b[j], p.dw[j]);
        }
        out
    };
    let ftilde = vadd(
        &vadd(&f_ex(x), &mv(&B[0], &g[0]), -1.0),
        &mv(&B[1], &g[1]),
        -1.0,
    );
    let mut brace = vadd(x, &ftilde, p.h);
    for j in 0..2 {
        brace = vadd(&brace, &g[j], p.dw[j]);
    }
    let mut omega = madd(&A0, &madd(&mm(&B[0], &B[0]), &mm(&B[1], &B[1]), 1.0), -0.5);
    omega = [
        [omega[0][0] * p.h, omega[0][1] * p.h],
        [omega[1][0] * p.h, omega[1][1] * p.h],
    ];
    for j in 0..2 {
        omega = madd(&omega, &B[j], p.dw[j]);
    }
    match family {
        "em" => em,
        "milstein" => {
            let mut out = em;
            for j in 0..2 {
                let lead = madd(&B[j], &jac_x(j, x), 1.0);
                for i in 0..2 {
                    out = vadd(&out, &mv(&lead, &b[i]), p.i[i][j]);
                }
            }
            vadd(&out, &delayed_sum(p), 1.0)
        }
        "mem" => mv(&expm_taylor(&omega), &brace),
        "mm" => {
            let comm = |a: &M2, c: &M2| madd(&mm(a, c), &mm(c, a), -1.0);
            let all = [A0, B[0], B[1]];
            // integral pairs indexed 0..=m, where index 0 is the time integrator W_0 = t
            let ii = |a: usize, c: usize| -> f64 {
                match (a, c) {
                    (0, 0) => unreachable!(),
                    (0, c) => p.i_0j[c - 1],
                    (a, 0) => p.i_j0[a - 1],
                    (a, c) => p.i[a - 1][c - 1],
                }
            };
            for a in 0..3 {
                for c in a + 1..3 {
                    omega = madd(&omega, &comm(&all[a], &all[c]), 0.5 * (ii(c, a) - ii(a, c)));
                }
            }
            let mut br = brace;
            for j in 0..2 {
                for i in 0..2 {
                    let term = vadd(&mv(&jac_x(j, x), &b[i]), &mv(&B[i], &g[j]), -1.0);
                    br = vadd(&br, &term, p.i[i][j]);
                }
            }
            br = vadd(&br, &delayed_sum(p), 1.0);
            mv(&expm_taylor(&omega), &br)
        }
        _ => unreachable!(),
    }
}

pub fn phi(t: f64) -> V2 {
    use std::f64::consts::PI;
    [
        (4.0 + t * t * (3.0 * PI * t).sin()) / 5.0,
        (1.0 + t * t * (2.0 * PI * t).cos()) / 5.0,
    ]
}
