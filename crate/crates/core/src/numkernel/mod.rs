//! Dense tensors, a recording tape for reverse-mode gradients, and a
//! finite-difference oracle to check it against.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_gradient, max_relative_error};
pub use tape::{gelu, Gradients, Tape, Var};
pub use tensor::{softmax_rows, Element, Mask, Precision, Tensor};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
