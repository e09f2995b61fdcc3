//! Builds the score, probability and J matrices for one hand-made trial and
//! scores it with the parameter-free and matrix-linear heads.

use sasv::scoring::{
    j_matrix_with, matrix_linear_score, prob_matrix, prob_product_score, score_matrix, JMode,
    MatrixLinear,
};
use sasv::{l2_normalize, CmClassifier};

fn main() -> sasv::Result<()> {
    let e_test = l2_normalize(&[0.9, 0.1, 0.3, -0.2])?;
    let e_en = l2_normalize(&[1.0, 0.0, 0.25, -0.1])?;
    let e_cm = vec![1.4, -0.3, 0.2, 0.1];
    let clf = CmClassifier::new(vec![-1.0, 0.1, 0.0, 0.0], vec![1.0, -0.1, 0.0, 0.0])?;

    let s = score_matrix(&e_test, &e_cm, &clf, &e_en)?;
    let p = prob_matrix(&s);
    println!("S = {:?}", s.to_array());
    println!("P = {:?}", p.to_array());

    for mode in [JMode::Formula, JMode::Entrywise] {
        let j = j_matrix_with(&p, mode);
        let head = MatrixLinear { j_mode: mode, ..MatrixLinear::new([0.25; 4], 0.0, false) };
        println!("{mode:?}: J = {:?}, score = {:.6}", j.to_array(), matrix_linear_score(&j, &head));
    }
    println!("P_SV * P_CM = {:.6}", prob_product_score(p.p_sv, p.p_cm)?);
    Ok(())
}
