//! The hierarchical operator with identical blocks is the Kronecker product
//! `A ⊗ B`; its adjoint satisfies `<Hx, y> = <x, H*y>`.
//!
//!     cargo run --example kronecker

use hisparse::model::{BlockVector, MeasurementVector, Scalar, ScalarField};
use hisparse::operators::{gaussian_matrix, gaussian_mixing, BlockOperator, HierarchicalOperator};
use hisparse::rng::seeded;
use rand::Rng;

fn main() -> hisparse::Result<()> {
    let mut rng = seeded(7);
    let (slots, n_blocks, m, n) = (3, 4, 5, 6);
    let a = gaussian_mixing(slots, n_blocks, 1.0 / slots as f64, ScalarField::Complex, &mut rng)?;
    let b = gaussian_matrix(m, n, 1.0 / m as f64, ScalarField::Complex, &mut rng)?;
    let h = HierarchicalOperator::kronecker(a.clone(), BlockOperator::new(b.clone())?);

    let mut draw = |len| -> Vec<Scalar> { (0..len).map(|_| Scalar::new(rng.random(), rng.random())).collect() };
    let x = BlockVector::from_flat(&vec![n; n_blocks], draw(n_blocks * n), ScalarField::Complex)?;
    let y = MeasurementVector::new(slots, m, draw(slots * m))?;

    let dense = a.matrix().kron(&b);
    let via_dense = dense.mul_vec(x.as_flat());
    let via_operator = h.apply(&x)?;
    let gap: f64 = via_dense.iter().zip(via_operator.as_slice()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
    println!("‖(A ⊗ B) x − H x‖ = {gap:.2e}");

    let lhs: Scalar = via_operator.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p.conj() * q).sum();
    let adj = h.adjoint_apply(&y)?;
    let rhs: Scalar = x.as_flat().iter().zip(adj.as_flat()).map(|(p, q)| p.conj() * q).sum();
    println!("<Hx, y> = {lhs:.6}, <x, H*y> = {rhs:.6}");
    Ok(())
}
