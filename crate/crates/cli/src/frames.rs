use seedtrack_core::eval::{select_frames, FrameSelection};

use crate::error::{CliError, CliResult};

/// Resolves a frame list against the frames a reference covers.
///
/// `uniform:N`, `stride:N` and `all` pick positions within `available`
/// (sorted); an explicit `3,10,42` list is taken literally.
pub fn resolve(spec: &str, available: &[usize]) -> CliResult<Vec<usize>> {
    let spec = spec.trim();
    if spec.starts_with(|c: char| c.is_ascii_digit()) {
        return spec
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::invalid(format!("bad frame index `{p}` in `{spec}`")))
            })
            .collect();
    }
    let sel: FrameSelection = spec.parse()?;
    Ok(select_frames(available.len(), sel)
        .into_iter()
        .map(|i| available[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        let dense: Vec<usize> = (0..10).collect();
        assert_eq!(resolve("all", &dense).unwrap(), dense);
        assert_eq!(resolve("uniform:3", &dense).unwrap(), vec![0, 5, 9]);
        assert_eq!(resolve("3, 7,1", &dense).unwrap(), vec![3, 7, 1]);
        assert_eq!(resolve("uniform:2", &[4, 8, 30]).unwrap(), vec![4, 30]);
        assert!(resolve("3,x", &dense).is_err());
        assert!(resolve("every:2", &dense).is_err());
    }
}
