//! Closed-form eigenvalues of symmetric 3x3 matrices.

/// Eigenvalues of the symmetric matrix packed as `[xx, yy, zz, xy, xz, yz]`,
/// in ascending order. Uses the trigonometric solution of the characteristic
/// cubic.
pub fn sym3_eigenvalues(m: [f64; 6]) -> [f64; 3] {
    let [a11, a22, a33, a12, a13, a23] = m;
    let off = a12 * a12 + a13 * a13 + a23 * a23;
    if off == 0.0 {
        let mut d = [a11, a22, a33];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let q = (a11 + a22 + a33) / 3.0;
    let b11 = a11 - q;
    let b22 = a22 - q;
    let b33 = a33 - q;
    let p2 = b11 * b11 + b22 * b22 + b33 * b33 + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let det = b11 * (b22 * b33 - a23 * a23) - a12 * (a12 * b33 - a23 * a13)
        + a13 * (a12 * a23 - b22 * a13);
    let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let largest = q + 2.0 * p * phi.cos();
    let smallest = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let middle = 3.0 * q - largest - smallest;
    let mut out = [smallest, middle, largest];
    out.sort_by(f64::total_cmp);
    out
}
