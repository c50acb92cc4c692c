use inca_core::embed::{deterministic_embed, embed_texts, DeterministicEmbedder};

// Frozen from the first run of the seed-7, h=8 deterministic embedder.
const BANKING: [f64; 8] = [
    -0.6703923760637919,
    -0.44582097624047656,
    0.2415780954525322,
    -0.07210600900178503,
    0.07249149000033367,
    0.2622195112749857,
    -0.0046796836729203675,
    -0.46284174278888707,
];
const PAYCHECK_DEPOSIT: [f64; 8] = [
    0.18541160246412564,
    0.33912057256268996,
    -0.08381633483778386,
    -0.17623761029309346,
    -0.18621586200338935,
    -0.7205874032638344,
    0.5085310906242518,
    0.002911792112465973,
];

#[test]
fn deterministic_embedder_matches_frozen_vectors() {
    let e = DeterministicEmbedder::new(7, 8).unwrap();
    let out = embed_texts(&e, &["banking", "paycheck deposit"]).unwrap();
    assert_eq!(out[0], BANKING);
    assert_eq!(out[1], PAYCHECK_DEPOSIT);
}

#[test]
fn lexical_neighbours_are_closer() {
    let cos = |a: &[f64], b: &[f64]| inca_core::linalg::cosine(a, b);
    let a = deterministic_embed(7, "transfer funds", 64).unwrap();
    let b = deterministic_embed(7, "transfer money", 64).unwrap();
    let c = deterministic_embed(7, "zebra quartz", 64).unwrap();
    assert!(cos(&a, &b) > cos(&a, &c));
}
