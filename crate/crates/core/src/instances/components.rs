//! 4-connected component labeling.

/// Labels 4-connected `true` regions `1..=n` in raster order of their first
/// pixel; `false` pixels get 0.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, usize) {
    label_by(width, height, |i| mask[i], |a, b| mask[a] && mask[b])
}

/// Labels 4-connected runs of equal nonzero labels; 0 stays background.
pub fn label_regions(labels: &[u32], width: usize, height: usize) -> (Vec<u32>, usize) {
    label_by(width, height, |i| labels[i] != 0, |a, b| labels[a] == labels[b])
}

fn label_by(
    width: usize,
    height: usize,
    fg: impl Fn(usize) -> bool,
    joined: impl Fn(usize, usize) -> bool,
) -> (Vec<u32>, usize) {
    let mut out = vec![0u32; width * height];
    let mut n = 0u32;
    let mut stack = Vec::new();
    for start in 0..width * height {
        if out[start] != 0 || !fg(start) {
            continue;
        }
        n += 1;
        out[start] = n;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if out[j] == 0 && joined(i, j) {
                    out[j] = n;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
    }
    (out, n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_not_connected() {
        let mask = [true, false, false, true];
        let (l, n) = label_components(&mask, 2, 2);
        assert_eq!(n, 2);
        assert_eq!(l, vec![1, 0, 0, 2]);
    }

    #[test]
    fn u_shape_is_one() {
        #[rustfmt::skip]
        let mask = [
            true, false, true,
            true, false, true,
            true, true,  true,
        ];
        let (l, n) = label_components(&mask, 3, 3);
        assert_eq!(n, 1);
        assert!(l.iter().zip(&mask).all(|(&v, &m)| (v == 1) == m));
    }

    #[test]
    fn regions_split_by_label() {
        let labels = [3, 3, 4, 0, 3, 0];
        let (l, n) = label_regions(&labels, 3, 2);
        assert_eq!(n, 2);
        assert_eq!(l, vec![1, 1, 2, 0, 1, 0]);
    }
}
