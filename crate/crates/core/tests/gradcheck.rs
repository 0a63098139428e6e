//! Analytic gradients against central finite differences (64-bit).

mod common;

use common::{random_tensor, small_task, tiny_model};
use linkprobe::dataset::vocab::{CLS, SEP};
use linkprobe::encoder::{encode_pair, scaled_attention_passes, ModelParams};
use linkprobe::numkernel::{finite_difference_gradient, max_relative_error, Mask, Tape, Var};
use linkprobe::trainer::{evaluate_accuracy, loss_gradients};
use linkprobe::{Result, Tensor};

const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;
const H: f64 = 1e-5;

/// Checks `d/dx_k Σ W ⊙ op(x)` for every input `k`, with a fixed random projection `W`.
fn check(inputs: &[Tensor], op: impl Fn(&mut Tape, &[Var]) -> Result<Var>) {
    let project = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let out = op(tape, vars)?;
        let w = tape.constant(random_tensor(tape.value(out).shape(), 99, 1.0));
        let y = tape.mul(out, w)?;
        tape.sum(y)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = project(&mut tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();
    for k in 0..inputs.len() {
        let f = |x: &Tensor| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(i, t)| tape.leaf(if i == k { x.clone() } else { t.clone() }))
                .collect();
            let out = project(&mut tape, &vars)?;
            Ok(tape.value(out).item())
        };
        let numeric = finite_difference_gradient(f, &inputs[k], H).unwrap();
        let err = max_relative_error(&grads.get(vars[k]), &numeric, FLOOR);
        assert!(err < TOL, "input {k}: relative error {err}");
    }
}

#[test]
fn matmul() {
    let a = random_tensor(&[3, 4], 1, 1.0);
    let b = random_tensor(&[4, 5], 2, 1.0);
    check(&[a.clone(), b], |t, v| t.matmul(v[0], v[1], false));
    let bt = random_tensor(&[5, 4], 3, 1.0);
    check(&[a, bt], |t, v| t.matmul(v[0], v[1], true));
}

#[test]
fn softmax_rows() {
    let x = random_tensor(&[4, 4], 4, 2.0);
    check(&[x.clone()], |t, v| t.softmax_rows(v[0], None));
    let mask = Mask::key_padding(4, &[true, true, false, true]);
    check(&[x], move |t, v| t.softmax_rows(v[0], Some(mask.clone())));
}

#[test]
fn layer_norm() {
    let x = random_tensor(&[3, 6], 5, 2.0);
    let g = random_tensor(&[6], 6, 1.0);
    let b = random_tensor(&[6], 7, 1.0);
    check(&[x, g, b], |t, v| t.layer_norm(v[0], v[1], v[2], 1e-12));
}

#[test]
fn gelu() {
    check(&[random_tensor(&[3, 5], 8, 3.0)], |t, v| t.gelu(v[0]));
}

#[test]
fn embedding_lookup() {
    check(&[random_tensor(&[6, 4], 9, 1.0)], |t, v| {
        t.gather_rows(v[0], vec![2, 0, 2, 5])
    });
}

#[test]
fn cross_entropy_over_five_logits() {
    check(&[random_tensor(&[3, 5], 10, 2.0)], |t, v| {
        t.cross_entropy(v[0], vec![4, 0, 2])
    });
}

#[test]
fn elementwise_and_structural() {
    let a = random_tensor(&[3, 4], 11, 1.0);
    let b = random_tensor(&[3, 4], 12, 1.0);
    let r = random_tensor(&[4], 13, 1.0);
    check(&[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]));
    check(&[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]));
    check(&[a.clone(), r], |t, v| t.add_row(v[0], v[1]));
    check(&[a.clone()], |t, v| t.scale(v[0], -0.7));
    check(&[a.clone()], |t, v| t.slice_block(v[0], 1, 2, 1, 3));
    check(&[a.clone()], |t, v| t.reshape(v[0], &[2, 6]));
    check(&[a, b], |t, v| t.assemble(&[(v[0], 0, 0), (v[1], 2, 1)], 5, 5));
}

/// `∂F/∂α` of a 1-layer encoder logit against perturbing each attention entry.
#[test]
fn encoder_logit_wrt_attention() {
    for layers in [1, 2] {
        let p = tiny_model(layers, 20);
        let tokens = [CLS, 5, 6, 7, SEP, 8, 9, SEP];
        let base = encode_pair(&tokens, &p).unwrap().attention;
        for head in p.config.head_ids() {
            let analytic = &scaled_attention_passes(&tokens, &p, &base, &[head], &[1.0], None)
                .unwrap()[0]
                .gradients[0];
            let f = |a: &Tensor| -> Result<f64> {
                let mut b = base.clone();
                *b.get_mut(head) = a.clone();
                Ok(scaled_attention_passes(&tokens, &p, &b, &[head], &[1.0], None)?[0].output)
            };
            let numeric = finite_difference_gradient(f, base.get(head), H).unwrap();
            let err = max_relative_error(analytic, &numeric, FLOOR);
            assert!(err < TOL, "{layers} layers, head {head}: {err}");
        }
    }
}

fn ce_loss(p: &ModelParams, data: &[linkprobe::dataset::TokenizedInstance]) -> f64 {
    let e = evaluate_accuracy(p, data).unwrap();
    e.logits
        .iter()
        .zip(&e.golds)
        .map(|(l, &g)| {
            let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - l[g - 1]
        })
        .sum::<f64>()
        / data.len() as f64
}

/// Parameter gradients of a 2-layer encoder's training loss.
#[test]
fn encoder_loss_wrt_parameters() {
    let task = small_task(2, 1);
    let p = tiny_model(2, task.vocab.len());
    let data = &task.train;
    let (loss, grads) = loss_gradients(&p, data).unwrap();
    assert!((loss - ce_loss(&p, data)).abs() < 1e-12);
    let analytic: Vec<(String, Tensor)> = grads
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    let checked = [
        "embeddings.position",
        "embeddings.segment",
        "embeddings.norm_gain",
        "layers.0.query_weight",
        "layers.0.key_bias",
        "layers.0.value_weight",
        "layers.1.output_weight",
        "layers.1.attn_norm_bias",
        "layers.1.ff_in_weight",
        "layers.1.ff_out_bias",
        "layers.1.ff_norm_gain",
        "classifier.weight",
        "classifier.bias",
    ];
    for name in checked {
        let (_, g) = analytic.iter().find(|(n, _)| n == name).unwrap();
        let x = p
            .tensors
            .named()
            .into_iter()
            .find(|(n, _)| n == name)
            .unwrap()
            .1
            .clone();
        let f = |v: &Tensor| -> Result<f64> {
            let mut q = p.clone();
            for (n, slot) in q.tensors.named_mut() {
                if n == name {
                    *slot = v.clone();
                }
            }
            Ok(ce_loss(&q, data))
        };
        let numeric = finite_difference_gradient(f, &x, H).unwrap();
        let err = max_relative_error(g, &numeric, FLOOR);
        assert!(err < TOL, "{name}: {err}");
    }
}
