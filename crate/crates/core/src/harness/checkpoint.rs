use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::GaussianMlpPolicy;
use crate::scalar::Scalar;

pub fn checkpoint<T: Scalar>(policy: &GaussianMlpPolicy<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, policy.to_checkpoint()).map_err(|e| Error::io(path, e))
}

pub fn restore<T: Scalar>(path: impl AsRef<Path>) -> Result<GaussianMlpPolicy<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GaussianMlpPolicy::from_checkpoint(&text)
}
