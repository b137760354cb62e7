//! Atomic output files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// Writes each `(name, contents)` to a temporary file in `dir` and renames it
/// into place, so readers never observe a partial file.
pub fn write_all_atomic(dir: &Path, files: &[(&str, String)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, dir.join(name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        write_all_atomic(&out, &[("a.txt", "one".into())]).unwrap();
        write_all_atomic(&out, &[("a.txt", "two".into())]).unwrap();
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "two");
        let names: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }
}
