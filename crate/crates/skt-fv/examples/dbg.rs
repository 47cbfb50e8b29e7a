use skt_fv::linsolve::DenseLu;
fn main() {
    // small matrix that forces pivoting
    let n = 3usize;
    let a = vec![
        0.0, 2.0, 1.0,
        1.0, 0.0, 3.0,
        2.0, 1.0, 0.0,
    ];
    let b = vec![5.0, 10.0, 4.0];
    let lu = DenseLu::factor(a.clone(), n).unwrap();
    let x = lu.solve(&b);
    // residual
    for i in 0..n {
        let ax: f64 = (0..n).map(|j| a[i*n+j] * x[j]).sum();
        println!("row {i}: Ax = {ax}, b = {}", b[i]);
    }
    println!("x = {x:?}");
}
