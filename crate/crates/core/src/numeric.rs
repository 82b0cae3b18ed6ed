//! Deterministic reductions and seed derivation.
//!
//! Every parallel reduction in the crate goes through [`par_sum`] or
//! [`par_sum_vec`]: the index range is cut into fixed-size chunks, each chunk
//! is summed sequentially and the chunk totals are combined by pairwise
//! summation. The result therefore depends only on the inputs, never on the
//! number of worker threads or on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Chunk length used by every deterministic parallel reduction.
pub const CHUNK: usize = 4096;

/// Pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Deterministic parallel sum of `f(i)` for `i` in `0..n`.
pub fn par_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        })
        .collect();
    pairwise_sum(&partials)
}

/// Deterministic parallel sum of vector-valued contributions.
///
/// `f(i, acc)` adds the contribution of index `i` into the `width`-long
/// accumulator.
pub fn par_sum_vec<F>(n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut acc = vec![0.0; width];
            for i in lo..hi {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut column = vec![0.0; partials.len()];
    (0..width)
        .map(|k| {
            for (slot, p) in column.iter_mut().zip(&partials) {
                *slot = p[k];
            }
            pairwise_sum(&column)
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a path of stream indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &k| {
        splitmix64(acc ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D)))
    })
}

/// Seeded generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative difference `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Formats `x` with 17 significant digits, `%.17g` style, so that text
/// output round-trips and is byte-stable.
pub fn fmt_g17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let prec = (16 - exp).max(0) as usize;
        trim_zeros(format!("{x:.prec$}"))
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mant.to_string()),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Pretty JSON with every float printed by [`fmt_g17`]; non-finite floats become `null`.
pub fn json_g17<T: serde::Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    let mut out = String::new();
    write_json(&v, 0, &mut out);
    out.push('\n');
    out
}

fn write_json(v: &serde_json::Value, depth: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |n: usize, out: &mut String| out.extend(std::iter::repeat_n("  ", n));
    match v {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => match n.as_f64() {
            Some(x) if x.is_finite() => {
                let s = fmt_g17(x);
                out.push_str(&s);
                // keep integral floats recognizable as floats
                if !s.contains(['.', 'e']) {
                    out.push_str(".0");
                }
            }
            _ => out.push_str("null"),
        },
        Value::Array(items) if !items.is_empty() => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(depth + 1, out);
                write_json(item, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(depth + 1, out);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_json(item, depth + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_sum_matches_sequential_sum() {
        let n = 3 * CHUNK + 17;
        let s = par_sum(n, |i| (i as f64).sqrt());
        let direct: f64 = (0..n).map(|i| (i as f64).sqrt()).sum();
        assert!((s - direct).abs() < 1e-6 * direct);
    }

    #[test]
    fn par_sum_is_independent_of_worker_count() {
        let n = 10 * CHUNK + 3;
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (1.0 + i as f64);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| par_sum(n, f));
        let b = four.install(|| par_sum(n, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn json_floats_use_seventeen_digits() {
        #[derive(serde::Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
            n: usize,
            name: &'static str,
            empty: Vec<f64>,
        }
        let text = json_g17(&S {
            a: 0.1,
            b: vec![1.0, f64::NAN],
            n: 3,
            name: "x",
            empty: vec![],
        });
        assert_eq!(text, "{\n  \"a\": 0.10000000000000001,\n  \"b\": [\n    1.0,\n    null\n  ],\n  \"empty\": [],\n  \"n\": 3,\n  \"name\": \"x\"\n}\n");
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(fmt_g17(0.25), "0.25");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-3.5e-9), "-3.4999999999999999e-09");
        assert_eq!(fmt_g17(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(fmt_g17(1e20), "1e+20");
        for x in [0.1, 2.0f64.sqrt(), 1e-300, 123456.789, -7.25e17] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(7, &[0, 1]);
        let b = derive_seed(7, &[1, 0]);
        let c = derive_seed(8, &[0, 1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, &[0, 1]));
    }
}
