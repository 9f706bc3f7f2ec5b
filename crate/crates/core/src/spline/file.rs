//! Text format for spline spaces defined by per-element Bezier extraction.
//!
//! Grammar (line oriented, `#` starts a comment, tokens are whitespace
//! separated; numeric lists may continue onto following lines until their
//! declared count is met):
//!
//! ```text
//! iga-extraction v1
//! degree <p>
//! nbasis <n>
//! nelem <m>
//! nodes <n>                  # optional control net, n lines of "x y z"
//! <x> <y> <z>
//! ...
//! element <id>
//! count <ne>
//! indices <ne integers>
//! coeffs <ne * (p+1)^2 reals, row-major per basis function>
//! weights <ne reals>         # optional, marks the element rational
//! ```
//!
//! Every element block repeats `element .. coeffs [weights]`. Elements must
//! appear in id order 0..m-1. Trailing garbage is rejected.

use super::{ExtractionElement, SplineSpace};
use crate::{Error, Result};
use std::io::{BufRead, Write};

/// A spline space plus the optional control net stored with it.
#[derive(Debug, Clone)]
pub struct ExtractionMesh {
    pub space: SplineSpace,
    /// Control point positions, one per basis function, when present.
    pub nodes: Option<Vec<[f64; 3]>>,
}

struct Tokens {
    items: Vec<(usize, String)>,
    pos: usize,
}

impl Tokens {
    fn new<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut items = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("");
            for tok in body.split_whitespace() {
                items.push((i + 1, tok.to_string()));
            }
        }
        Ok(Tokens { items, pos: 0 })
    }

    fn line(&self) -> Option<usize> {
        self.items
            .get(self.pos.min(self.items.len().saturating_sub(1)))
            .map(|(l, _)| *l)
    }

    fn next(&mut self, what: &str) -> Result<&str> {
        match self.items.get(self.pos) {
            Some((_, t)) => {
                self.pos += 1;
                Ok(t)
            }
            None => Err(Error::MeshFormat {
                line: self.items.last().map(|(l, _)| *l),
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn peek(&self) -> Option<&str> {
        self.items.get(self.pos).map(|(_, t)| t.as_str())
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let line = self.line();
        let t = self.next(word)?;
        if t != word {
            return Err(Error::MeshFormat {
                line,
                msg: format!("expected `{word}`, found `{t}`"),
            });
        }
        Ok(())
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let line = self.line();
        let t = self.next(what)?;
        t.parse().map_err(|_| Error::MeshFormat {
            line,
            msg: format!("expected integer {what}, found `{t}`"),
        })
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let line = self.line();
        let t = self.next(what)?;
        t.parse().map_err(|_| Error::MeshFormat {
            line,
            msg: format!("expected real {what}, found `{t}`"),
        })
    }
}

/// Parses an extraction mesh from a reader, validating all structural
/// invariants of the space.
pub fn load_extraction_mesh<R: BufRead>(reader: R) -> Result<ExtractionMesh> {
    let mut tk = Tokens::new(reader)?;
    tk.expect("iga-extraction")?;
    tk.expect("v1")?;
    tk.expect("degree")?;
    let degree = tk.usize("degree")?;
    if degree < 2 {
        return Err(Error::MeshFormat {
            line: tk.line(),
            msg: format!("degree must be >= 2, got {degree}"),
        });
    }
    tk.expect("nbasis")?;
    let n_basis = tk.usize("nbasis")?;
    tk.expect("nelem")?;
    let n_elem = tk.usize("nelem")?;

    let mut nodes = None;
    if tk.peek() == Some("nodes") {
        tk.expect("nodes")?;
        let n = tk.usize("node count")?;
        if n != n_basis {
            return Err(Error::MeshFormat {
                line: tk.line(),
                msg: format!("nodes count {n} does not match nbasis {n_basis}"),
            });
        }
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            let x = tk.f64("node coordinate")?;
            let y = tk.f64("node coordinate")?;
            let z = tk.f64("node coordinate")?;
            pts.push([x, y, z]);
        }
        nodes = Some(pts);
    }

    let nb = (degree + 1) * (degree + 1);
    let mut elements = Vec::with_capacity(n_elem);
    for want_id in 0..n_elem {
        tk.expect("element")?;
        let id = tk.usize("element id")?;
        if id != want_id {
            return Err(Error::MeshFormat {
                line: tk.line(),
                msg: format!("element ids must be consecutive: expected {want_id}, found {id}"),
            });
        }
        tk.expect("count")?;
        let ne = tk.usize("basis count")?;
        if ne == 0 {
            return Err(Error::MeshValidation {
                element: id,
                msg: "element supports no basis functions".into(),
            });
        }
        tk.expect("indices")?;
        let mut indices = Vec::with_capacity(ne);
        for _ in 0..ne {
            indices.push(tk.usize("basis index")?);
        }
        tk.expect("coeffs")?;
        let mut coeffs = Vec::with_capacity(ne);
        for _ in 0..ne {
            let mut row = Vec::with_capacity(nb);
            for _ in 0..nb {
                row.push(tk.f64("extraction coefficient")?);
            }
            coeffs.push(row);
        }
        let mut weights = None;
        if tk.peek() == Some("weights") {
            tk.expect("weights")?;
            let mut w = Vec::with_capacity(ne);
            for _ in 0..ne {
                w.push(tk.f64("weight")?);
            }
            weights = Some(w);
        }
        elements.push(ExtractionElement {
            id,
            indices,
            coeffs,
            weights,
        });
    }
    if let Some((line, tok)) = tk.items.get(tk.pos) {
        return Err(Error::MeshFormat {
            line: Some(*line),
            msg: format!("trailing garbage `{tok}`"),
        });
    }

    let space = SplineSpace {
        degree,
        n_basis,
        elements,
        structured: None,
    };
    space.validate()?;
    Ok(ExtractionMesh { space, nodes })
}

/// Writes a space (and optional control net) in the v1 text format with
/// full double precision.
pub fn write_extraction_mesh<W: Write>(
    w: &mut W,
    space: &SplineSpace,
    nodes: Option<&[[f64; 3]]>,
) -> std::io::Result<()> {
    writeln!(w, "iga-extraction v1")?;
    writeln!(w, "degree {}", space.degree)?;
    writeln!(w, "nbasis {}", space.n_basis)?;
    writeln!(w, "nelem {}", space.n_elems())?;
    if let Some(pts) = nodes {
        writeln!(w, "nodes {}", pts.len())?;
        for p in pts {
            writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
        }
    }
    for el in &space.elements {
        writeln!(w, "element {}", el.id)?;
        writeln!(w, "count {}", el.indices.len())?;
        let idx: Vec<String> = el.indices.iter().map(|i| i.to_string()).collect();
        writeln!(w, "indices {}", idx.join(" "))?;
        writeln!(w, "coeffs")?;
        for row in &el.coeffs {
            let row: Vec<String> = row.iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(w, "  {}", row.join(" "))?;
        }
        if let Some(weights) = &el.weights {
            let ws: Vec<String> = weights.iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(w, "weights {}", ws.join(" "))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{build_structured_patch, PatchSpec};
    use std::io::BufReader;

    fn round_trip(space: &SplineSpace) -> ExtractionMesh {
        let mut buf = Vec::new();
        write_extraction_mesh(&mut buf, space, None).unwrap();
        load_extraction_mesh(BufReader::new(buf.as_slice())).unwrap()
    }

    #[test]
    fn round_trip_preserves_evaluation() {
        let space = build_structured_patch(&PatchSpec::periodic(2, 4, 5), None).unwrap();
        let loaded = round_trip(&space).space;
        for e in [0usize, 7, 19] {
            let a = space.element_basis(e, (0.3, 0.8)).unwrap();
            let b = loaded.element_basis(e, (0.3, 0.8)).unwrap();
            for l in 0..a.vals.len() {
                assert!((a.vals[l] - b.vals[l]).abs() < 1e-15);
                assert!((a.d2[2][l] - b.d2[2][l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn malformed_header_rejected() {
        let r = load_extraction_mesh(BufReader::new("bezier v1\n".as_bytes()));
        assert!(matches!(r, Err(Error::MeshFormat { .. })));
    }

    #[test]
    fn trailing_garbage_rejected() {
        let space = build_structured_patch(&PatchSpec::open(2, 1, 1), None).unwrap();
        let mut buf = Vec::new();
        write_extraction_mesh(&mut buf, &space, None).unwrap();
        buf.extend_from_slice(b"\nleftover 1 2 3\n");
        let r = load_extraction_mesh(BufReader::new(buf.as_slice()));
        match r {
            Err(Error::MeshFormat { line, msg }) => {
                assert!(msg.contains("trailing"));
                assert!(line.is_some());
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn non_partition_of_unity_rejected_with_element_id() {
        let mut space = build_structured_patch(&PatchSpec::open(2, 2, 1), None).unwrap();
        space.elements[1].coeffs[0][0] += 0.25;
        let mut buf = Vec::new();
        write_extraction_mesh(&mut buf, &space, None).unwrap();
        let r = load_extraction_mesh(BufReader::new(buf.as_slice()));
        match r {
            Err(Error::MeshValidation { element, .. }) => assert_eq!(element, 1),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_basis_count_rejected() {
        let text = "iga-extraction v1\ndegree 2\nnbasis 9\nnelem 1\nelement 0\ncount 9\nindices 0 1 2 3 4 5 6 7 9\ncoeffs\n";
        // 9 rows of 9 coefficients, identity-ish
        let mut full = text.to_string();
        for l in 0..9 {
            let row: Vec<String> = (0..9)
                .map(|k| if k == l { "1.0".into() } else { "0.0".to_string() })
                .collect();
            full.push_str(&row.join(" "));
            full.push('\n');
        }
        let r = load_extraction_mesh(BufReader::new(full.as_bytes()));
        assert!(matches!(r, Err(Error::MeshValidation { .. })));
    }
}
