//! Series/frame conversions: slicing a series into overlapping frames and
//! merging frames back with count-normalized overlap-add.

use crate::error::Error;
use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// Number of frames covering a length-`p` series once it is right-padded so
/// that every sample falls inside some frame. Assumes `p >= l`.
pub fn frame_count(p: usize, l: usize, s: usize) -> usize {
    if p <= l {
        1
    } else {
        (p - l + s - 1) / s + 1
    }
}

fn check_geometry(l: usize, s: usize) -> Result<(), Error> {
    if l == 0 || s == 0 || s > l {
        return Err(Error::Usage(format!(
            "frame geometry L={l}, S={s} violates 1 <= S <= L"
        )));
    }
    Ok(())
}

/// Slice a series into an `L x K` matrix whose column `k` holds samples
/// `[k*S, k*S + L)`. The series is right-padded with zeros so the last frame
/// is full; padded entries never reach real output positions in
/// [`overlap_add`], so the pad value is immaterial.
pub fn frame<F: Scalar>(x: &[F], l: usize, s: usize) -> Result<Tensor<F>, Error> {
    check_geometry(l, s)?;
    let p = x.len();
    if p < l {
        return Err(Error::InvalidInput(format!(
            "series of length {p} is shorter than the frame length {l}"
        )));
    }
    let k = frame_count(p, l, s);
    let mut data = vec![F::zero(); l * k];
    for ki in 0..k {
        for li in 0..l {
            let pos = ki * s + li;
            if pos < p {
                data[li * k + ki] = x[pos];
            }
        }
    }
    Ok(Tensor::new(data, vec![l, k]))
}

/// Inverse of [`frame`]: sum the overlapping frame contributions per
/// timestamp, divide each timestamp by its coverage count, and truncate the
/// right padding back to `p` samples.
pub fn overlap_add<F: Scalar>(frames: &Tensor<F>, s: usize, p: usize) -> Result<Vec<F>, Error> {
    let (l, k) = match *frames.shape() {
        [l, k] => (l, k),
        ref sh => {
            return Err(Error::shape(
                "overlap_add",
                format!("expected an L x K frame matrix, got {sh:?}"),
            ))
        }
    };
    check_geometry(l, s)?;
    if p < l || frame_count(p, l, s) != k {
        return Err(Error::shape(
            "overlap_add",
            format!("{k} frames of geometry L={l}, S={s} do not cover a length-{p} series"),
        ));
    }
    let counts = coverage_counts(k, l, s);
    let d = frames.data();
    let mut out = vec![F::zero(); p];
    for ki in 0..k {
        for li in 0..l {
            let pos = ki * s + li;
            if pos < p {
                out[pos] += d[li * k + ki];
            }
        }
    }
    for (pos, v) in out.iter_mut().enumerate() {
        *v /= F::from_f64(counts[pos] as f64);
    }
    Ok(out)
}

/// Coverage count per padded position: how many frames contain it.
pub(crate) fn coverage_counts(k: usize, l: usize, s: usize) -> Vec<usize> {
    let p_pad = (k - 1) * s + l;
    let mut counts = vec![0usize; p_pad];
    for ki in 0..k {
        for li in 0..l {
            counts[ki * s + li] += 1;
        }
    }
    counts
}

/// Scatter targets for merging a batch of `(nb*k) x l` frame rows into
/// `nb` padded series laid side by side: flat frame entry `(bi*k + ki, li)`
/// lands on column `bi*p_pad + ki*s + li`.
pub(crate) fn ola_scatter_indices(nb: usize, k: usize, l: usize, s: usize) -> Vec<usize> {
    let p_pad = (k - 1) * s + l;
    let mut idx = Vec::with_capacity(nb * k * l);
    for bi in 0..nb {
        for ki in 0..k {
            for li in 0..l {
                idx.push(bi * p_pad + ki * s + li);
            }
        }
    }
    idx
}

/// Reciprocal coverage counts tiled over `nb` series, matching the scatter
/// layout above.
pub(crate) fn ola_inverse_counts<F: Scalar>(nb: usize, k: usize, l: usize, s: usize) -> Vec<F> {
    let inv: Vec<F> = coverage_counts(k, l, s)
        .into_iter()
        .map(|c| F::one() / F::from_f64(c as f64))
        .collect();
    let mut out = Vec::with_capacity(nb * inv.len());
    for _ in 0..nb {
        out.extend_from_slice(&inv);
    }
    out
}
