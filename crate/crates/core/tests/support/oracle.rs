//! Reference implementations written independently of the library.
//!
//! Parameters use the flat layout of the library model: for each layer,
//! `out × in` weights row-major, then `out` biases.

#![allow(dead_code)]

pub fn logits(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    activations(sizes, params, x).pop().unwrap()
}

/// Input followed by every layer output (ReLU applied to hidden layers).
fn activations(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let a = acts.last().unwrap();
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut z: Vec<f64> =
            (0..n_out).map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * a[i]).sum::<f64>()).collect();
        if l + 2 < sizes.len() {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

pub fn probs(s: &[f64]) -> Vec<f64> {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn xent(p: &[f64], q: &[f64]) -> f64 {
    -p.iter().zip(q).map(|(a, b)| a * b.max(1e-12).ln()).sum::<f64>()
}

/// Batch mean of `(1−r)·CE(onehot, p) + r·CE(p, softmax(target[t]))`,
/// or plain cross-entropy without a target.
pub fn regularized_loss(
    sizes: &[usize],
    params: &[f64],
    data: &[(Vec<f64>, usize)],
    target: Option<&[Vec<f64>]>,
    r: f64,
) -> f64 {
    let l = *sizes.last().unwrap();
    data.iter()
        .map(|(x, t)| {
            let p = probs(&logits(sizes, params, x));
            let mut onehot = vec![0.0; l];
            onehot[*t] = 1.0;
            match target {
                Some(tab) => (1.0 - r) * xent(&onehot, &p) + r * xent(&p, &probs(&tab[*t])),
                None => xent(&onehot, &p),
            }
        })
        .sum::<f64>()
        / data.len() as f64
}

/// `r · Σ_t CE(p(c̃_t), softmax(target[t]))`.
pub fn distill_loss(sizes: &[usize], params: &[f64], cov: &[Vec<f64>], target: &[Vec<f64>], r: f64) -> f64 {
    r * cov.iter().zip(target).map(|(c, t)| xent(&probs(&logits(sizes, params, c)), &probs(t))).sum::<f64>()
}

pub fn numeric_gradient(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..params.len())
        .map(|i| {
            let mut p = params.to_vec();
            p[i] += h;
            let up = f(&p);
            p[i] -= 2.0 * h;
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

/// Backpropagated mean cross-entropy gradient over `batch`.
pub fn ce_gradient(sizes: &[usize], params: &[f64], batch: &[(&[f64], usize)]) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let offsets: Vec<usize> = sizes
        .windows(2)
        .scan(0, |off, w| {
            let o = *off;
            *off += w[0] * w[1] + w[1];
            Some(o)
        })
        .collect();
    for (x, t) in batch {
        let acts = activations(sizes, params, x);
        let mut delta = probs(acts.last().unwrap());
        delta[*t] -= 1.0;
        for l in (0..sizes.len() - 1).rev() {
            let (n_in, n_out, off) = (sizes[l], sizes[l + 1], offsets[l]);
            let a = &acts[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    grad[off + o * n_in + i] += delta[o] * a[i] / batch.len() as f64;
                }
                grad[off + n_in * n_out + o] += delta[o] / batch.len() as f64;
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| if a[i] > 0.0 { (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum() } else { 0.0 })
                    .collect();
            }
        }
    }
    grad
}

/// FedAvg with exact links: every device runs `epochs` passes of minibatch
/// SGD from the shared model in the order given by `orders[iteration][device][epoch]`,
/// then everyone adopts the mean of the models.
pub fn fedavg(
    sizes: &[usize],
    w0: &[f64],
    shards: &[Vec<(Vec<f64>, usize)>],
    orders: &[Vec<Vec<Vec<usize>>>],
    batch_size: usize,
    alpha: f64,
) -> Vec<f64> {
    let mut global = w0.to_vec();
    for per_device in orders {
        let mut next = vec![0.0; global.len()];
        for (shard, epochs) in shards.iter().zip(per_device) {
            let mut w = global.clone();
            for order in epochs {
                for chunk in order.chunks(batch_size) {
                    let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&j| (&shard[j].0[..], shard[j].1)).collect();
                    let g = ce_gradient(sizes, &w, &batch);
                    w.iter_mut().zip(&g).for_each(|(p, g)| *p -= alpha * g);
                }
            }
            next.iter_mut().zip(&w).for_each(|(n, p)| *n += p / shards.len() as f64);
        }
        global = next;
    }
    global
}
