use pyo3::prelude::*;
#[pymodule]
fn predprey_py(_m: &Bound<'_, PyModule>) -> PyResult<()> { Ok(()) }
