// scratch: compare series and CF2 branches near the split
fn main() {
    for x in [0.5f64, 1.0, 1.5, 1.9, 1.99, 2.0, 2.01, 2.1, 3.0, 5.0, 10.0, 50.0] {
        let s = relpimc::specfun::bessel_k0(x).unwrap();
        let s1 = relpimc::specfun::bessel_k1(x).unwrap();
        println!("{:8.4}  K0={:.17e}  K1={:.17e}", x, s, s1);
    }
}
