#![no_main]

use coulomb_screen::cli::vtk::{read_vtk, write_vtk};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(parsed) = read_vtk(text) else { return };
    let fields: Vec<(&str, &[f64])> = parsed.fields.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    let written = write_vtk("fuzz", &parsed.grid, &fields).expect("parsed fields can be written");
    let back = read_vtk(&written).expect("written file parses");
    assert_eq!(back.fields, parsed.fields);
});
