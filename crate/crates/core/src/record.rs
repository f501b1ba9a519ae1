//! Config preambles for TNSR checkpoints: JSON bytes stored one per `f32`
//! element, which represents every byte exactly.

use autodiff::{Scalar, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn encode<T: Scalar, C: Serialize>(config: &C) -> Tensor<T> {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    let data = bytes.iter().map(|&b| T::cast(b as f64)).collect();
    Tensor::from_vec(vec![bytes.len()], data).expect("1-d shape")
}

pub(crate) fn decode<T: Scalar, C: DeserializeOwned>(name: &str, t: &Tensor<T>) -> Result<C> {
    let bytes = t
        .data()
        .iter()
        .map(|x| {
            let v = x.as_f64();
            (v >= 0.0 && v <= 255.0 && v.fract() == 0.0).then_some(v as u8)
        })
        .collect::<Option<Vec<u8>>>()
        .ok_or_else(|| Error::Format {
            expected: format!("{name} as JSON bytes"),
            found: "non-byte values".into(),
        })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        expected: format!("{name} as JSON"),
        found: e.to_string(),
    })
}

/// Splits off the leading preamble tensor, which must be called `name`.
pub(crate) fn split<'a, T: Scalar>(
    name: &str,
    tensors: &'a [(String, Tensor<T>)],
) -> Result<(&'a Tensor<T>, &'a [(String, Tensor<T>)])> {
    match tensors.split_first() {
        Some(((n, t), rest)) if n == name => Ok((t, rest)),
        Some(((n, _), _)) => Err(Error::Format {
            expected: name.into(),
            found: n.clone(),
        }),
        None => Err(Error::Format {
            expected: name.into(),
            found: "empty checkpoint".into(),
        }),
    }
}

pub(crate) fn no_trailing(name: &str, rest: &[u8]) -> Result<()> {
    if rest.is_empty() {
        Ok(())
    } else {
        Err(Error::Format {
            expected: format!("end of {name}"),
            found: format!("{} trailing bytes", rest.len()),
        })
    }
}
