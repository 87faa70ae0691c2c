//! Test-side reference implementations, independent of the library's tensor
//! path: plain nested-loop arithmetic on `Vec<Vec<f64>>`, no tapes, no shared
//! kernels.

#![allow(dead_code)]

/// Straight-line reference of the co-attention aggregator.
///
/// * `current`: T rows of D values
/// * `neighbor`: L rows of D values
/// * `w_i`: 3D affinity weights ordered [neighbor block; current block;
///   product block], `b_i` its scalar bias
/// * `w_o`: 4D x D output weights, `b_o` its D bias values
///
/// Returns the T x D output.
pub fn coattn_reference(
    current: &[Vec<f64>],
    neighbor: &[Vec<f64>],
    w_i: &[f64],
    b_i: f64,
    w_o: &[Vec<f64>],
    b_o: &[f64],
    relu: bool,
) -> Vec<Vec<f64>> {
    let t_len = current.len();
    let l_len = neighbor.len();
    let d = current[0].len();
    assert_eq!(w_i.len(), 3 * d);
    assert_eq!(w_o.len(), 4 * d);

    // M[i][j] = w_s . S_i + w_c . C_j + w_m . (S_i * C_j) + b
    let mut m = vec![vec![0.0; t_len]; l_len];
    for i in 0..l_len {
        for j in 0..t_len {
            let mut v = b_i;
            for k in 0..d {
                v += w_i[k] * neighbor[i][k];
                v += w_i[d + k] * current[j][k];
                v += w_i[2 * d + k] * neighbor[i][k] * current[j][k];
            }
            m[i][j] = v;
        }
    }

    let softmax = |xs: &[f64]| -> Vec<f64> {
        let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xs.iter().map(|x| (x - mx).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|e| e / sum).collect()
    };

    // attended neighbor rows: for each current token j, softmax over column j
    let mut s_tilde = vec![vec![0.0; d]; t_len];
    for j in 0..t_len {
        let col: Vec<f64> = (0..l_len).map(|i| m[i][j]).collect();
        let a = softmax(&col);
        for k in 0..d {
            s_tilde[j][k] = (0..l_len).map(|i| a[i] * neighbor[i][k]).sum();
        }
    }

    // one global distribution over current tokens from per-column maxima
    let col_max: Vec<f64> = (0..t_len)
        .map(|j| (0..l_len).map(|i| m[i][j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let b = softmax(&col_max);
    let mut c_tilde = vec![0.0; d];
    for k in 0..d {
        c_tilde[k] = (0..t_len).map(|j| b[j] * current[j][k]).sum();
    }

    // fuse and project
    let mut out = vec![vec![0.0; d]; t_len];
    for j in 0..t_len {
        let mut fused = Vec::with_capacity(4 * d);
        fused.extend_from_slice(&current[j]);
        fused.extend_from_slice(&s_tilde[j]);
        for k in 0..d {
            fused.push(current[j][k] * s_tilde[j][k]);
        }
        for k in 0..d {
            fused.push(current[j][k] * c_tilde[k]);
        }
        for k in 0..d {
            let mut v = b_o[k];
            for (q, f) in fused.iter().enumerate() {
                v += f * w_o[q][k];
            }
            out[j][k] = if relu { v.max(0.0) } else { v };
        }
    }
    out
}

/// Deterministic pseudo-random stream for oracle fixtures: xorshift64*,
/// mapped into [-1, 1).
pub struct FixtureRng(u64);

impl FixtureRng {
    pub fn new(seed: u64) -> Self {
        FixtureRng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    }

    pub fn next_range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn rows(&mut self, r: usize, c: usize) -> Vec<Vec<f64>> {
        (0..r)
            .map(|_| (0..c).map(|_| self.next_f64()).collect())
            .collect()
    }
}
