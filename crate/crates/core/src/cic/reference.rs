//! Non-recursive reference forms of the CIC used as oracles.

use super::{CicConfig, CicParams};

/// Coefficients of the N-fold self-product of the length-RM all-ones
/// polynomial: h[0..=(RM-1)N], summing to (RM)^N.
pub fn impulse_response(params: &CicParams) -> Vec<i128> {
    let rm = params.rm() as usize;
    let mut h = vec![1i128];
    for _ in 0..params.stages {
        h = boxcar(&h, rm);
    }
    h
}

/// Convolution with a length-`len` all-ones sequence, by running sum.
fn boxcar(x: &[i128], len: usize) -> Vec<i128> {
    let mut out = Vec::with_capacity(x.len() + len - 1);
    let mut acc = 0i128;
    for i in 0..x.len() + len - 1 {
        if i < x.len() {
            acc += x[i];
        }
        if i >= len {
            acc -= x[i - len];
        }
        out.push(acc);
    }
    out
}

fn multiply(a: &[i128], b: &[i128]) -> Vec<i128> {
    let mut out = vec![0i128; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Exact direct convolution with [`impulse_response`], keeping output
/// indices ≡ 0 (mod R). Zero initial state.
pub fn reference_fir_decimate(params: &CicParams, input: &[i64]) -> Vec<i128> {
    let h = impulse_response(params);
    let r = params.decimation as usize;
    (0..input.len())
        .step_by(r)
        .map(|n| {
            let taps = h.len().min(n + 1);
            (0..taps).map(|k| h[k] * input[n - k] as i128).sum()
        })
        .collect()
}

/// Recursive integrator/comb structure in unbounded (i128) arithmetic, no
/// wraparound. Valid while intermediate sums fit 127 bits.
pub fn exact_recursive_cic(params: &CicParams, input: &[i64]) -> Vec<i128> {
    let n = params.stages as usize;
    let r = params.decimation as usize;
    let m = params.diff_delay as usize;
    let mut acc = vec![0i128; n];
    let mut history = vec![vec![0i128; m]; n];
    let mut slot = vec![0usize; n];
    let mut out = Vec::new();
    for (i, &x) in input.iter().enumerate() {
        let mut v = x as i128;
        for a in acc.iter_mut() {
            *a += v;
            v = *a;
        }
        if i % r == 0 {
            for k in 0..n {
                let delayed = history[k][slot[k]];
                history[k][slot[k]] = v;
                slot[k] = (slot[k] + 1) % m;
                v -= delayed;
            }
            out.push(v);
        }
    }
    out
}

/// Output-rate latency of the pipelined structure.
///
/// The staged integrators delay the signal by N-1 input cycles; the
/// downsampler capture phase is advanced by (N-1) mod R so only the whole
/// output periods, floor((N-1)/R), remain. The registered downsampler adds
/// one output cycle and the N comb registers add N more.
pub fn pipeline_latency(params: &CicParams) -> usize {
    let n = params.stages as usize;
    let r = params.decimation as usize;
    (n - 1) / r + n + 1
}

/// Worst-case |truncated·2^shift − full| in full-precision LSBs.
///
/// Truncating the input of integrator j (or of the comb section) discards up
/// to 2^(w1−w_new) − 2^(w1−w_old) LSBs. That error reaches the output through
/// the remaining integrators and all combs, i.e. through
/// (1 − z^−RM)^(j−1) · (Σ z^−k)^(N−j+1) at the input rate, so its output
/// contribution is bounded by the step size times the l1 norm of that
/// impulse response.
pub fn truncation_error_bound(cfg: &CicConfig) -> u128 {
    let p = cfg.params();
    let n = p.stages as usize;
    let rm = p.rm() as usize;
    let widths = cfg.schedule().widths();
    let w1 = widths[0];
    let comb_diff = {
        let mut d = vec![0i128; rm + 1];
        d[0] = 1;
        d[rm] = -1;
        d
    };
    let mut bound = 0u128;
    // boundary j feeds integrator j (0-based, j >= 1); j == n is the comb input
    for j in 1..=n {
        let w_old = widths[j - 1];
        let w_new = if j < n { widths[j] } else { cfg.schedule().comb_width() };
        if w_new == w_old {
            continue;
        }
        let step = (1u128 << (w1 - w_new)) - (1u128 << (w1 - w_old));
        let mut g = vec![1i128];
        for _ in 0..j {
            g = multiply(&g, &comb_diff);
        }
        for _ in j..n {
            g = boxcar(&g, rm);
        }
        let l1: u128 = g.iter().map(|c| c.unsigned_abs()).sum();
        bound += step * l1;
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cic::CicConfig;

    #[test]
    fn impulse_response_examples() {
        let h = impulse_response(&CicParams::BASELINE);
        assert_eq!(h.len(), 76);
        assert_eq!(h.iter().sum::<i128>(), 1_048_576);
        assert_eq!(impulse_response(&CicParams::new(1, 1, 7, 3)), vec![1; 7]);
        assert_eq!(impulse_response(&CicParams::new(2, 1, 3, 3)), vec![1, 2, 3, 2, 1]);
        assert_eq!(impulse_response(&CicParams::new(2, 3, 1, 3)), vec![1, 2, 3, 2, 1]);
    }

    #[test]
    fn impulse_input_gives_phase_zero_taps() {
        let p = CicParams::BASELINE;
        let h = impulse_response(&p);
        let mut x = vec![0i64; 160];
        x[0] = 1;
        let y = reference_fir_decimate(&p, &x);
        let expected: Vec<i128> = (0..160).step_by(16).map(|k| h.get(k).copied().unwrap_or(0)).collect();
        assert_eq!(y, expected);
    }

    #[test]
    fn constant_input_steady_state() {
        let y = reference_fir_decimate(&CicParams::BASELINE, &[1; 200]);
        assert_eq!(*y.last().unwrap(), 1_048_576);
    }

    #[test]
    fn recursive_form_matches_convolution() {
        let p = CicParams::new(3, 2, 5, 6);
        let x: Vec<i64> = (0..300).map(|i| ((i * 7919) % 61) as i64 - 30).collect();
        assert_eq!(exact_recursive_cic(&p, &x), reference_fir_decimate(&p, &x));
    }

    #[test]
    fn latency_formula() {
        assert_eq!(pipeline_latency(&CicParams::new(1, 1, 2, 1)), 2);
        assert_eq!(pipeline_latency(&CicParams::BASELINE), 6);
        assert_eq!(pipeline_latency(&CicParams::new(5, 1, 2, 1)), 8);
        assert_eq!(pipeline_latency(&CicParams::new(3, 1, 1, 1)), 6);
    }

    #[test]
    fn bound_is_zero_without_truncation() {
        let cfg = CicConfig::new(CicParams::BASELINE, 25).unwrap();
        assert_eq!(truncation_error_bound(&cfg), 0);
        assert!(truncation_error_bound(&CicConfig::baseline()) > 0);
    }

    #[test]
    fn bound_single_comb_truncation() {
        // N=1: only the comb input is truncated, by 2 bits; comb l1 norm is 2
        let cfg = CicConfig::new(CicParams::new(1, 1, 4, 3), 3).unwrap();
        assert_eq!(cfg.register_width(), 5);
        assert_eq!(truncation_error_bound(&cfg), 3 * 2);
    }
}
