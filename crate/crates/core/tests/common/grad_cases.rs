//! Finite-difference gradient suite shared by the core integration tests
//! and the acceptance harness: every differentiable graph op plus both
//! training losses, each checked on seeded random instances against the
//! central-difference oracle.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strand_core::model::ModelConfig;
use strand_core::numerics::gradcheck::{central_difference, max_relative_error, FD_STEP};
use strand_core::numerics::TensorId;
use strand_core::synthgen::derive_seed;
use strand_core::training::{
    decomposition_gradients, reconstruction_gradients, DecompExample, ReconExample,
};
use strand_core::{Graph, ModelParams, Tensor};

pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: usize = 20;

pub struct SuiteReport {
    /// (case name, worst relative error over all instances).
    pub cases: Vec<(String, f64)>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn worst(&self) -> f64 {
        self.cases.iter().fold(0.0, |w, (_, e)| w.max(*e))
    }

    pub fn failures(&self) -> Vec<&(String, f64)> {
        self.cases.iter().filter(|(_, e)| *e > TOLERANCE).collect()
    }
}

type BuildFn = Box<dyn Fn(&mut Graph, &[TensorId]) -> TensorId>;
type CaseGen = Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, BuildFn)>;

fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(
        (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        vec![r, c],
    )
}

/// Values bounded away from zero, for the relu kink.
fn mat_offset(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(
        (0..r * c)
            .map(|_| {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.gen_range(0.05..1.0)
            })
            .collect(),
        vec![r, c],
    )
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=4)
}

/// One random instance per differentiable op, with shapes drawn small.
fn op_cases() -> Vec<(&'static str, CaseGen)> {
    let mut cases: Vec<(&'static str, CaseGen)> = Vec::new();
    let mut case = |name: &'static str, gen: CaseGen| cases.push((name, gen));

    case(
        "matmul",
        Box::new(|rng| {
            let (m, k, n) = (dim(rng), dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, k), mat(rng, k, n)];
            (
                inputs,
                Box::new(|g, ids| g.matmul(ids[0], ids[1]).unwrap()),
            )
        }),
    );
    case(
        "transpose",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.transpose(ids[0]).unwrap()))
        }),
    );
    case(
        "add",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n), mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.add(ids[0], ids[1]).unwrap()))
        }),
    );
    case(
        "sub",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n), mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.sub(ids[0], ids[1]).unwrap()))
        }),
    );
    case(
        "mul",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n), mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.mul(ids[0], ids[1]).unwrap()))
        }),
    );
    case(
        "scale",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            let c: f64 = rng.gen_range(-2.0..2.0);
            (inputs, Box::new(move |g, ids| g.scale(ids[0], c)))
        }),
    );
    case(
        "add_bias",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n), mat(rng, m, 1)];
            (
                inputs,
                Box::new(|g, ids| g.add_bias(ids[0], ids[1]).unwrap()),
            )
        }),
    );
    case(
        "concat_rows",
        Box::new(|rng| {
            let n = dim(rng);
            let (m1, m2, m3) = (dim(rng), dim(rng), dim(rng));
            let inputs = vec![mat(rng, m1, n), mat(rng, m2, n), mat(rng, m3, n)];
            (inputs, Box::new(|g, ids| g.concat(ids, 0).unwrap()))
        }),
    );
    case(
        "concat_cols",
        Box::new(|rng| {
            let m = dim(rng);
            let (n1, n2, n3) = (dim(rng), dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n1), mat(rng, m, n2), mat(rng, m, n3)];
            (inputs, Box::new(|g, ids| g.concat(ids, 1).unwrap()))
        }),
    );
    case(
        "slice_rows",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let start = rng.gen_range(0..m);
            let len = rng.gen_range(1..=m - start);
            let inputs = vec![mat(rng, m, n)];
            (
                inputs,
                Box::new(move |g, ids| g.slice(ids[0], 0, start, len).unwrap()),
            )
        }),
    );
    case(
        "slice_cols",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let start = rng.gen_range(0..n);
            let len = rng.gen_range(1..=n - start);
            let inputs = vec![mat(rng, m, n)];
            (
                inputs,
                Box::new(move |g, ids| g.slice(ids[0], 1, start, len).unwrap()),
            )
        }),
    );
    case(
        "reshape",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (
                inputs,
                Box::new(move |g, ids| g.reshape(ids[0], vec![1, m * n]).unwrap()),
            )
        }),
    );
    case(
        "pad_cols",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let extra = rng.gen_range(1..=3);
            let inputs = vec![mat(rng, m, n)];
            (
                inputs,
                Box::new(move |g, ids| g.pad_cols(ids[0], n + extra).unwrap()),
            )
        }),
    );
    case(
        "gather_cols",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let k = rng.gen_range(1..=6);
            let indices: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
            let inputs = vec![mat(rng, m, n)];
            (
                inputs,
                Box::new(move |g, ids| g.gather_cols(ids[0], indices.clone()).unwrap()),
            )
        }),
    );
    case(
        "scatter_add_cols",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let out_cols = n + rng.gen_range(0..=2);
            let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..out_cols)).collect();
            let inputs = vec![mat(rng, m, n)];
            (
                inputs,
                Box::new(move |g, ids| {
                    g.scatter_add_cols(ids[0], indices.clone(), out_cols).unwrap()
                }),
            )
        }),
    );
    case(
        "sum",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.sum(ids[0])))
        }),
    );
    case(
        "mean",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.mean(ids[0])))
        }),
    );
    case(
        "sigmoid",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.sigmoid(ids[0])))
        }),
    );
    case(
        "tanh",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.tanh(ids[0])))
        }),
    );
    case(
        "relu",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat_offset(rng, m, n)];
            (inputs, Box::new(|g, ids| g.relu(ids[0])))
        }),
    );
    case(
        "softmax_axis0",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.softmax(ids[0], 0).unwrap()))
        }),
    );
    case(
        "softmax_axis1",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n)];
            (inputs, Box::new(|g, ids| g.softmax(ids[0], 1).unwrap()))
        }),
    );
    case(
        "mse_mean",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n), mat(rng, m, n)];
            (
                inputs,
                Box::new(|g, ids| g.mse(ids[0], ids[1], true).unwrap()),
            )
        }),
    );
    case(
        "mse_sum",
        Box::new(|rng| {
            let (m, n) = (dim(rng), dim(rng));
            let inputs = vec![mat(rng, m, n), mat(rng, m, n)];
            (
                inputs,
                Box::new(|g, ids| g.mse(ids[0], ids[1], false).unwrap()),
            )
        }),
    );

    cases
}

/// Worst relative error of tape gradients against central differences for
/// one op instance. Non-scalar outputs are contracted to a scalar with a
/// fixed random projection so every output element carries weight.
fn check_op_instance(inputs: &[Tensor], proj_seed: u64, build: &BuildFn) -> f64 {
    let (out_numel, out_shape) = {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = inputs.iter().map(|t| g.leaf(t)).collect();
        let out = build(&mut g, &ids);
        (g.numel(out), g.shape(out).to_vec())
    };
    let proj: Option<Vec<f64>> = if out_numel == 1 {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(proj_seed);
        Some((0..out_numel).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };

    let run = |vals: &[f64], with_grad: bool| -> (f64, Option<Vec<f64>>) {
        let mut g = Graph::new();
        let mut ids = Vec::with_capacity(inputs.len());
        let mut off = 0;
        for t in inputs {
            let n = t.numel();
            let mut leaf = Tensor::new(vals[off..off + n].to_vec(), t.shape().to_vec());
            if with_grad {
                leaf = leaf.with_grad();
            }
            ids.push(g.leaf(&leaf));
            off += n;
        }
        let out = build(&mut g, &ids);
        let loss = match &proj {
            None => out,
            Some(p) => {
                let pid = g.constant(p.clone(), out_shape.clone());
                let weighted = g.mul(out, pid).unwrap();
                g.sum(weighted)
            }
        };
        let value = g.data(loss)[0];
        if with_grad {
            g.backward(loss).unwrap();
            let grads = ids
                .iter()
                .flat_map(|&id| g.grad(id).expect("leaf gradient").to_vec())
                .collect();
            (value, Some(grads))
        } else {
            (value, None)
        }
    };

    let flat: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    let (_, analytic) = run(&flat, true);
    let numeric = central_difference(|x| run(x, false).0, &flat, FD_STEP);
    max_relative_error(&analytic.unwrap(), &numeric)
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        basis_count: 3,
        bottleneck_dim: 2,
        hidden_dim: 2,
        block_count: 1,
        chunk_size: 2,
        ..ModelConfig::default()
    }
}

fn random_decomp_batch(rng: &mut ChaCha8Rng, len: usize) -> Vec<DecompExample<f64>> {
    (0..2)
        .map(|i| {
            let comp =
                |rng: &mut ChaCha8Rng| -> Vec<f64> {
                    (0..len).map(|_| rng.gen_range(0.0..0.33)).collect()
                };
            let trend = comp(rng);
            let seasonal = comp(rng);
            let remainder = comp(rng);
            let x = (0..len)
                .map(|t| trend[t] + seasonal[t] + remainder[t])
                .collect();
            DecompExample {
                x,
                trend,
                seasonal,
                remainder,
                valid: if i == 0 { len } else { len - 1 },
            }
        })
        .collect()
}

/// FD check of the full decomposition objective w.r.t. every parameter.
fn check_decomposition_loss(seed: u64) -> f64 {
    let cfg = tiny_model();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0x10ad, seed));
    let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
    let batch = random_decomp_batch(&mut rng, 8);
    check_loss(&cfg, &mut params, |p, c| {
        decomposition_gradients(p, c, &batch)
    })
}

/// FD check of the full reconstruction objective w.r.t. every parameter.
fn check_reconstruction_loss(seed: u64) -> f64 {
    let cfg = tiny_model();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0x20ad, seed));
    let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
    let batch: Vec<ReconExample<f64>> = random_decomp_batch(&mut rng, 8)
        .iter()
        .map(ReconExample::from)
        .collect();
    check_loss(&cfg, &mut params, |p, c| {
        reconstruction_gradients(p, c, &batch)
    })
}

fn check_loss(
    cfg: &ModelConfig,
    params: &mut ModelParams,
    mut objective: impl FnMut(&mut ModelParams, &ModelConfig) -> Result<f64, strand_core::Error>,
) -> f64 {
    objective(params, cfg).unwrap();
    let analytic: Vec<f64> = params
        .tensors_mut()
        .iter()
        .flat_map(|t| t.grad().expect("loss gradient").to_vec())
        .collect();
    for t in params.tensors_mut() {
        t.clear_grad();
    }
    let flat: Vec<f64> = params
        .tensors_mut()
        .iter()
        .flat_map(|t| t.data().to_vec())
        .collect();
    let template = params.clone();
    let numeric = central_difference(
        |x: &[f64]| {
            let mut probe = template.clone();
            let mut off = 0;
            for t in probe.tensors_mut() {
                let n = t.numel();
                t.data_mut().copy_from_slice(&x[off..off + n]);
                off += n;
            }
            objective(&mut probe, cfg).unwrap()
        },
        &flat,
        FD_STEP,
    );
    max_relative_error(&analytic, &numeric)
}

/// Run every case at [`INSTANCES`] seeded instances and report the worst
/// relative error per case.
pub fn run_suite() -> SuiteReport {
    let start = Instant::now();
    let mut report = Vec::new();
    for (case_idx, (name, gen)) in op_cases().into_iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..INSTANCES {
            let seed = derive_seed(1 + case_idx as u64, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (inputs, build) = gen(&mut rng);
            worst = worst.max(check_op_instance(&inputs, derive_seed(seed, 1), &build));
        }
        report.push((name.to_string(), worst));
    }
    for (name, check) in [
        ("loss_decomposition", check_decomposition_loss as fn(u64) -> f64),
        ("loss_reconstruction", check_reconstruction_loss),
    ] {
        let mut worst = 0.0f64;
        for i in 0..INSTANCES {
            worst = worst.max(check(i as u64));
        }
        report.push((name.to_string(), worst));
    }
    SuiteReport {
        cases: report,
        elapsed: start.elapsed(),
    }
}
