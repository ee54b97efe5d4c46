use predmetric::models::*;
use nalgebra::DMatrix;

fn main() {
    // numeric provider vs analytic
    let pair = builtin_location_scale(LocationScalePairSpec {
        phi: SymmetricBase::standard_normal(),
        phi_tilde: SymmetricBase::standard_normal(),
    }).unwrap();
    let scheme = ExpectationScheme::RealLineQuadrature { tol: 1e-10 };
    let numeric = numeric_provider(pair.x_model(), scheme, 2, pair.domain().clone());
    let theta = [0.5, 1.2];
    let g_num = numeric.metric(&theta);
    let g_ana = pair.x_model().tensors().metric(&theta);
    println!("g_num = {g_num}");
    println!("g_ana = {g_ana}");
    println!("diff norm = {:.3e}", (g_num - g_ana.clone()).norm());

    let ge_num = numeric.gamma_e(&theta);
    let ge_ana = pair.x_model().tensors().gamma_e(&theta);
    for i in 0..2 { for j in 0..2 { for k in 0..2 {
        let d = (ge_num.get(i,j,k) - ge_ana.get(i,j,k)).abs();
        if d > 1e-7 { println!("gamma_e[{i}{j}{k}]: num {} ana {}", ge_num.get(i,j,k), ge_ana.get(i,j,k)); }
    }}}

    // shifted gaussian validation
    let skewed = SymmetricBase::new(
        "shifted-gaussian",
        |z: f64| -0.5 * (z - 0.5) * (z - 0.5) - 0.5 * (2.0 * std::f64::consts::PI).ln(),
        |rng: &mut dyn rand::RngCore| {
            let v: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            v + 0.5
        },
    );
    let res = builtin_location_scale(LocationScalePairSpec {
        phi: skewed,
        phi_tilde: SymmetricBase::standard_normal(),
    });
    match res {
        Ok(p) => {
            let c = p.ls_constants().unwrap();
            println!("NOT rejected; constants {:?}", c);
            let g = p.x_model().tensors().metric(&[0.0, 1.0]);
            println!("metric {g}");
        }
        Err(e) => println!("rejected: {e}"),
    }
    let _ = DMatrix::<f64>::zeros(1,1);
}
