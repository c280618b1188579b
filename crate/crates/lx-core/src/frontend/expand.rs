//! Algebraic-datatype expansion.
//!
//! A `datatype` declaration is sugar for one concept plus one entity per
//! case: the `using` block and the trailing `& { ... }` block become concept
//! members, and every case becomes an entity providing the concept. Running
//! this pass first means the rest of the pipeline only ever sees concepts,
//! entities, functions, and type aliases.

use alloc::vec::Vec;

use crate::frontend::ast::{Decl, DeclKind, SurfaceProgram};

pub fn expand_adts(mut prog: SurfaceProgram) -> SurfaceProgram {
    let mut out = Vec::with_capacity(prog.decls.len());
    for decl in prog.decls.drain(..) {
        match decl.kind {
            DeclKind::Datatype { name, using, cases, attached } => {
                let mut members = using;
                members.extend(attached);
                out.push(Decl {
                    id: decl.id,
                    pos: decl.pos,
                    kind: DeclKind::Concept { name: name.clone(), provides: Vec::new(), members },
                });
                for case in cases {
                    out.push(Decl {
                        id: decl.id,
                        pos: case.pos,
                        kind: DeclKind::Entity {
                            name: case.name,
                            provides: alloc::vec![name.clone()],
                            members: case.members,
                        },
                    });
                }
            }
            kind => out.push(Decl { kind, ..decl }),
        }
    }
    SurfaceProgram { decls: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use alloc::string::ToString;

    #[test]
    fn datatype_becomes_concept_and_cases() {
        let src = r#"
datatype ITree using {
    size: Nat
} of Nil {}
  | Leaf { v: Int }
  | Node { v: Int, l: ITree, r: ITree }
& {
    method isEmpty(): Bool {
        return this.size == 0n;
    }
};
"#;
        let result = parse_program(&[("t.lx".into(), src.into())]);
        let prog = expand_adts(result.program.unwrap());
        let names: Vec<_> = prog
            .decls
            .iter()
            .map(|d| match &d.kind {
                DeclKind::Concept { name, members, .. } => ("concept", name.clone(), members.len()),
                DeclKind::Entity { name, provides, .. } => {
                    assert_eq!(provides.as_slice(), ["ITree".to_string()]);
                    ("entity", name.clone(), 0)
                }
                _ => panic!("unexpected decl"),
            })
            .collect();
        assert_eq!(names[0], ("concept", "ITree".into(), 2));
        assert_eq!(names[1].1, "Nil");
        assert_eq!(names[2].1, "Leaf");
        assert_eq!(names[3].1, "Node");
    }
}
