//! Records a small expression on the tape, runs backward, and compares the
//! result against central differences.

use graphnorm::autodiff::{gradient_check, Tape};
use graphnorm::{Result, Tensor};

fn main() -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]])?)?;
    let w = tape.leaf(Tensor::column_vector(&[0.3, -0.7]))?;
    let z = tape.matmul(x, w)?;
    let s = tape.sigmoid(z)?;
    let loss = tape.mean_all(s)?;
    tape.backward(loss)?;
    println!("loss   {:.6}", tape.value(loss).data()[0]);
    println!("dL/dw  {:?}", tape.grad(w).unwrap().data());

    let check = gradient_check(
        &[tape.value(x).clone(), tape.value(w).clone()],
        1e-6,
        |t, v| {
            let z = t.matmul(v[0], v[1])?;
            let s = t.sigmoid(z)?;
            t.mean_all(s)
        },
    )?;
    println!(
        "max relative error {:.2e} over {} entries",
        check.max_rel_error, check.checked
    );
    Ok(())
}
