use std::ffi::CString;
use std::path::Path;

use pyo3::prelude::*;
use qstar_py::qstar_py;

#[test]
fn smoke_script_runs_in_embedded_interpreter() {
    pyo3::append_to_inittab!(qstar_py);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("python/smoke_test.py");
    let source = CString::new(std::fs::read_to_string(&path).unwrap()).unwrap();
    Python::attach(|py| {
        let module = PyModule::from_code(py, &source, c"smoke_test.py", c"smoke_test").unwrap();
        let code: i32 = module
            .getattr("main")
            .unwrap()
            .call0()
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(code, 0);
    });
}
