#![no_main]

use libfuzzer_sys::fuzz_target;
use thermoclust::algebra::{ComplexMatrix, PauliOp, PauliString};
use thermoclust::lattice::Site;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(pauli) = PauliString::from_json(text) else {
        return;
    };
    let factors = &pauli.0;
    let dim = factors[0].offset.len();
    if dim == 0 || dim > 3 || factors.len() > 8 {
        return;
    }
    let Ok(op) = pauli.place(&Site::origin(dim)) else {
        return;
    };
    assert!(op.region.len() <= factors.len());
    let pauli_only = factors
        .iter()
        .all(|f| matches!(f.op, PauliOp::I | PauliOp::X | PauliOp::Y | PauliOp::Z));
    if !pauli_only {
        return;
    }
    // Products of Pauli matrices are unitary.
    let m = &op.matrix;
    let gram = m.adjoint().matmul(m).expect("square");
    let err = gram
        .sub(&ComplexMatrix::identity(m.dim()))
        .expect("same dim")
        .max_abs();
    assert!(err <= 1e-12);
});
