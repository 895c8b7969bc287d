//! Cyclic Jacobi eigenvalues for small dense symmetric matrices.

/// Eigenvalues of a symmetric 4x4 matrix (unsorted).
pub(crate) fn sym_eigenvalues4(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    const N: usize = 4;
    for _sweep in 0..50 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for p in 0..N {
            diag += a[p][p] * a[p][p];
            for q in (p + 1)..N {
                off += a[p][q] * a[p][q];
            }
        }
        if off <= 1e-34 * diag.max(1e-300) || off == 0.0 {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..N {
                    let arp = a[r][p];
                    let arq = a[r][q];
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..N {
                    let apr = a[p][r];
                    let aqr = a[q][r];
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
            }
        }
    }
    [a[0][0], a[1][1], a[2][2], a[3][3]]
}
