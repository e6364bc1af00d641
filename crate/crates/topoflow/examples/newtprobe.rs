use std::sync::Arc;
use topoflow::chstep::*;
use topoflow::fem::{ScalarFieldP1, VectorFieldP2};
use topoflow::fem::assembly;
use topoflow::mesh::{build_rectangle_mesh, Rect};
use topoflow::la;

fn main() {
    let mesh = Arc::new(build_rectangle_mesh(Rect::unit(), 0.2).unwrap());
    let n = mesh.n_vertices();
    println!("n = {n}");
    let p = ChParams { gamma: 0.1, epsilon: 0.005, s: 1e6 };
    let alpha = AlphaFunction::new(50.0, 10.0, 0.005);
    let u = VectorFieldP2::from_fn(mesh.clone(), |x, y| [y, x]);
    let q = VectorFieldP2::zero(mesh.clone());
    let phi_k = ScalarFieldP1::from_fn(mesh.clone(), |x, y| (2.0*std::f64::consts::PI*x).sin()*0.8*(y-0.5));
    let tau = 0.1;

    let g_table = mixing_weight_table(&u, &q);
    let mass = assembly::p1_mass(&mesh).build().unwrap();
    let stiff = assembly::p1_stiffness(&mesh).build().unwrap();
    let mut m_phi_k = vec![0.0; n]; mass.apply(&phi_k.values, &mut m_phi_k);
    let ge = p.gamma / p.epsilon;
    let phi_at = |phi: &[f64], t: usize, qp: usize| -> f64 {
        let v = mesh.simplex(t);
        let s = assembly::p1_q(qp);
        s[0]*phi[v[0]] + s[1]*phi[v[1]] + s[2]*phi[v[2]]
    };
    let residual = |phi: &[f64], w: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; 2*n];
        let mut m_phi = vec![0.0; n]; mass.apply(phi, &mut m_phi);
        let mut k_w = vec![0.0; n]; stiff.apply(w, &mut k_w);
        for i in 0..n { r[i] = (m_phi[i]-m_phi_k[i])/tau + k_w[i]; }
        let mut k_phi = vec![0.0; n]; stiff.apply(phi, &mut k_phi);
        let mut m_w = vec![0.0; n]; mass.apply(w, &mut m_w);
        let nl = assembly::p1_load(&mesh, |t, qp| {
            let pp = phi_at(phi, t, qp);
            lambda_s(p.s, pp) + alpha.prime(pp) * g_table[t][qp]
        });
        for i in 0..n { r[n+i] = p.gamma*p.epsilon*k_phi[i] + nl[i] - ge*m_phi_k[i] - m_w[i]; }
        r
    };
    // FD check of jacobian at (phi_k, 0)
    let phi0 = phi_k.values.clone(); let w0 = vec![0.0; n];
    let r0 = residual(&phi0, &w0);
    // direction
    let dphi: Vec<f64> = (0..n).map(|i| ((i*7%13) as f64/13.0 - 0.5)).collect();
    let dw: Vec<f64> = (0..n).map(|i| ((i*5%11) as f64/11.0 - 0.5)).collect();
    let h = 1e-7;
    let phi1: Vec<f64> = phi0.iter().zip(&dphi).map(|(a,b)| a + h*b).collect();
    let w1: Vec<f64> = w0.iter().zip(&dw).map(|(a,b)| a + h*b).collect();
    let r1 = residual(&phi1, &w1);
    let fd: Vec<f64> = r0.iter().zip(&r1).map(|(a,b)| (b-a)/h).collect();
    // assembled jacobian * direction
    let weighted = assembly::p1_weighted_mass(&mesh, |t, qp| {
        let pp = phi_at(&phi0, t, qp);
        lambda_s_prime(p.s, pp) + alpha.second(pp) * g_table[t][qp]
    }).build().unwrap();
    let mut jd = vec![0.0; 2*n];
    {
        let mut tmp = vec![0.0; n];
        mass.apply(&dphi, &mut tmp);
        for i in 0..n { jd[i] += tmp[i]/tau; }
        stiff.apply(&dw, &mut tmp);
        for i in 0..n { jd[i] += tmp[i]; }
        stiff.apply(&dphi, &mut tmp);
        for i in 0..n { jd[n+i] += p.gamma*p.epsilon*tmp[i]; }
        weighted.apply(&dphi, &mut tmp);
        for i in 0..n { jd[n+i] += tmp[i]; }
        mass.apply(&dw, &mut tmp);
        for i in 0..n { jd[n+i] -= tmp[i]; }
    }
    let err: f64 = fd.iter().zip(&jd).map(|(a,b)| (a-b).abs()).fold(0.0, f64::max);
    let scale: f64 = jd.iter().map(|v| v.abs()).fold(0.0, f64::max);
    println!("max |fd - J d| = {err:.3e}, scale {scale:.3e}");
}
