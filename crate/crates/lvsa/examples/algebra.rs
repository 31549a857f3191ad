//! Complex-vector algebra walkthrough: binding, the identity element,
//! magnitude-preserving bundling, and Hermitian scoring.
//!
//! Run with: `cargo run --example algebra`

use rand::{Rng, SeedableRng};

use lvsa::vsa::{mean_abs, norm_add, ComplexVec};

fn rand_cv(rng: &mut impl Rng, d: usize) -> ComplexVec {
    let v: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ComplexVec::from_stacked(&v)
}

fn main() -> lvsa::Result<()> {
    let d = 6;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let a = rand_cv(&mut rng, d);
    let b = rand_cv(&mut rng, d);
    let c = rand_cv(&mut rng, d);

    // Binding is the componentwise complex product: commutative, invertible
    // through the conjugate, with (1 + 0i, …) as identity.
    let ab = a.bind(&b)?;
    let ba = b.bind(&a)?;
    println!("bind commutes bitwise: {}", ab.stacked() == ba.stacked());

    let mut one = vec![0.0; 2 * d];
    one[..d].fill(1.0);
    let one = ComplexVec::from_stacked(&one);
    println!("identity binds exactly: {}", one.bind(&a)?.stacked() == a.stacked());

    // Unbinding: a ⊛ b ⊛ conj(b) recovers a up to |b|² per component, so for
    // retrieval one scores with the conjugate rather than dividing.
    let recovered = ab.bind(&b.conjugate())?;
    println!(
        "unbind alignment: herm(a ⊛ b ⊛ b̄, a) = {:.4} vs herm(c, a) = {:.4}",
        recovered.herm_score(&a)?,
        c.herm_score(&a)?
    );

    // norm_add bundles inputs and rescales so the mean component magnitude
    // of the result equals the mean of the inputs' — chains of bundles stay
    // numerically flat instead of shrinking like a plain average.
    let bundle = norm_add(&[a.clone(), b.clone(), c.clone()])?;
    let l_in = (a.magnitude() + b.magnitude() + c.magnitude()) / 3.0;
    println!(
        "bundle magnitude {:.6} vs mean input magnitude {:.6}",
        bundle.magnitude(),
        l_in
    );

    // The bundle stays closer (in Hermitian score) to each input than an
    // unrelated vector does.
    let noise = rand_cv(&mut rng, d);
    println!(
        "herm(bundle, a) = {:.4}, herm(bundle, noise) = {:.4}",
        bundle.herm_score(&a)?,
        bundle.herm_score(&noise)?
    );

    // Bundling is order-invariant bitwise, not just to rounding.
    let permuted = norm_add(&[c, a, b])?;
    println!(
        "bundle permutation-invariant bitwise: {}",
        bundle.stacked() == permuted.stacked()
    );

    // Everything above is the d-component complex algebra on stacked
    // [re…, im…] buffers; mean_abs is the scale functional norm_add preserves.
    println!("mean |component| of the bundle: {:.6}", mean_abs(&bundle.stacked()));
    Ok(())
}
