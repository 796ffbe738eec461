use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Fully connected layer, weights stored row-major as `out x inp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self { inp, out, weights: vec![0.0; inp * out], bias: vec![0.0; out] }
    }

    /// Orthogonal weights scaled by `gain`, zero bias.
    pub fn orthogonal<R: Rng>(inp: usize, out: usize, gain: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(inp, out);
        let transpose = out > inp;
        let (rows, cols) = if transpose { (inp, out) } else { (out, inp) };
        let mut m: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
        // Gram-Schmidt on the rows (rows <= cols)
        for r in 0..rows {
            for q in 0..r {
                let dot: f64 = (0..cols).map(|c| m[r * cols + c] * m[q * cols + c]).sum();
                for c in 0..cols {
                    m[r * cols + c] -= dot * m[q * cols + c];
                }
            }
            let norm = (0..cols).map(|c| m[r * cols + c].powi(2)).sum::<f64>().sqrt();
            for c in 0..cols {
                m[r * cols + c] /= norm;
            }
        }
        for o in 0..out {
            for i in 0..inp {
                let v = if transpose { m[i * cols + o] } else { m[o * cols + i] };
                layer.weights[o * inp + i] = gain * v;
            }
        }
        layer
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        for o in 0..self.out {
            let row = &self.weights[o * self.inp..(o + 1) * self.inp];
            y.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

/// Tanh hidden layers followed by a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations retained for backpropagation: input, then each layer's output
/// (post-tanh for hidden layers).
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    /// Input (`k = 0`) or output of layer `k - 1`.
    pub fn activation(&self, k: usize) -> &[f64] {
        &self.acts[k]
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; hidden gain `sqrt(2)`, output gain `out_gain`.
    pub fn orthogonal<R: Rng>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Self {
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let gain = if k == last { out_gain } else { std::f64::consts::SQRT_2 };
                Dense::orthogonal(w[0], w[1], gain, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self { layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inp];
        s.extend(self.layers.iter().map(|l| l.out));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x, &mut MlpCache::default()).to_vec()
    }

    pub fn forward_cached<'c>(&self, x: &[f64], cache: &'c mut MlpCache) -> &'c [f64] {
        cache.acts.resize(self.layers.len() + 1, Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let (head, tail) = cache.acts.split_at_mut(k + 1);
            let y = &mut tail[0];
            layer.forward(&head[k], y);
            if k < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        cache.output()
    }

    /// Accumulates `d loss / d params` into `grad` (flat, same order as
    /// [`Mlp::write_params`]) given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grad: &mut [f64]) {
        let mut delta = dout.to_vec();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.num_params();
        }
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &cache.acts[k];
            let g = &mut grad[offsets[k]..offsets[k] + layer.num_params()];
            let (gw, gb) = g.split_at_mut(layer.weights.len());
            for o in 0..layer.out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inp..(o + 1) * layer.inp];
                for (gwi, xi) in row.iter_mut().zip(x) {
                    *gwi += d * xi;
                }
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.inp];
                for (&d, row) in delta.iter().zip(layer.weights.chunks_exact(layer.inp)) {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // x is tanh output of the previous layer
                for (p, a) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    /// Reads parameters from the front of `src`, returning the remainder.
    pub fn read_params<'a>(&mut self, mut src: &'a [f64]) -> &'a [f64] {
        for l in &mut self.layers {
            let (w, rest) = src.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, rest) = rest.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            src = rest;
        }
        src
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_rows_or_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (inp, out) in [(5, 64), (64, 64), (64, 1)] {
            let l = Dense::orthogonal(inp, out, 1.0, &mut rng);
            let (n, m) = (inp.min(out), inp.max(out));
            let _ = m;
            // the smaller dimension's vectors are orthonormal
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = if out <= inp {
                        (0..inp).map(|i| l.weights[a * inp + i] * l.weights[b * inp + i]).sum()
                    } else {
                        (0..out).map(|o| l.weights[o * inp + a] * l.weights[o * inp + b]).sum()
                    };
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::orthogonal(&[3, 8, 8, 2], 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let w = [0.5, -1.5];
        let loss = |n: &Mlp| n.forward(&x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let mut cache = MlpCache::default();
        net.forward_cached(&x, &mut cache);
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&cache, &w, &mut grad);
        let mut flat = Vec::new();
        net.write_params(&mut flat);
        for k in 0..flat.len() {
            let mut p = net.clone();
            let mut f = flat.clone();
            f[k] += 1e-6;
            p.read_params(&f);
            let up = loss(&p);
            f[k] -= 2e-6;
            p.read_params(&f);
            let down = loss(&p);
            let numeric = (up - down) / 2e-6;
            assert!((numeric - grad[k]).abs() < 1e-7, "{k}: {numeric} vs {}", grad[k]);
        }
    }

    #[test]
    fn param_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::orthogonal(&[5, 64, 64, 1], 0.01, &mut rng);
        let mut flat = Vec::new();
        net.write_params(&mut flat);
        assert_eq!(flat.len(), net.num_params());
        assert_eq!(net.num_params(), 5 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
        let mut other = Mlp::zeros(&[5, 64, 64, 1]);
        assert!(other.read_params(&flat).is_empty());
        assert_eq!(other, net);
    }
}
