use super::{
    ComponentDecl, Flow, FlowProfile, Interaction, InteractionKind, Scenario, ScenarioError,
};
use crate::state::{BrainKind, BrainLabel, Window};
use std::collections::HashSet;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    pos: Pos,
}

fn tokenize(line: &str, line_no: usize) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in code.char_indices().chain(std::iter::once((code.len(), ' '))) {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &code[s..i],
                    pos: Pos {
                        line: line_no,
                        column: code[..s].chars().count() + 1,
                    },
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    out
}

struct Line<'a> {
    tokens: Vec<Token<'a>>,
    at: usize,
    end: Pos,
}

impl<'a> Line<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.at)
    }

    fn here(&self) -> Pos {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ScenarioError> {
        let pos = self.here();
        Err(ScenarioError::Syntax {
            line: pos.line,
            column: pos.column,
            found: self
                .peek()
                .map(|t| format!("'{}'", t.text))
                .unwrap_or_else(|| "end of line".into()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn next_word(&mut self, what: &str) -> Result<Token<'a>, ScenarioError> {
        match self.peek() {
            Some(t) if t.text != "->" => {
                let t = t.clone();
                self.at += 1;
                Ok(t)
            }
            _ => self.fail(&[what]),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ScenarioError> {
        match self.peek() {
            Some(t) if t.text == kw => {
                self.at += 1;
                Ok(())
            }
            _ => self.fail(&[&format!("'{kw}'")]),
        }
    }

    fn number(&mut self, allow_inf: bool) -> Result<(f64, Pos), ScenarioError> {
        let pos = self.here();
        let value = self.peek().and_then(|t| {
            if allow_inf && t.text == "inf" {
                return Some(f64::INFINITY);
            }
            t.text.parse::<f64>().ok().filter(|v| v.is_finite())
        });
        match value {
            Some(v) => {
                self.at += 1;
                Ok((v, pos))
            }
            None => self.fail(&["number"]),
        }
    }

    fn finish(&self) -> Result<(), ScenarioError> {
        if self.peek().is_some() {
            self.fail(&["end of line"])
        } else {
            Ok(())
        }
    }
}

struct Reference {
    name: String,
    pos: Pos,
}

#[derive(Default)]
struct Refs {
    components: Vec<Reference>,
    observers: Vec<Reference>,
}

/// Parses `.rsc` source text into a validated-for-reference scenario.
pub fn parse(src: &str) -> Result<Scenario, ScenarioError> {
    let mut name: Option<String> = None;
    let mut observers: Vec<String> = Vec::new();
    let mut components: Vec<ComponentDecl> = Vec::new();
    let mut interactions: Vec<Interaction> = Vec::new();
    let mut open: Option<Interaction> = None;
    let mut refs = Refs::default();
    let mut seen_components: HashSet<String> = HashSet::new();
    let mut last = Pos { line: 1, column: 1 };

    for (i, raw) in src.lines().enumerate() {
        let line_no = i + 1;
        let tokens = tokenize(raw, line_no);
        let end = Pos {
            line: line_no,
            column: raw.chars().count() + 1,
        };
        last = end;
        if tokens.is_empty() {
            continue;
        }
        let mut line = Line { tokens, at: 0, end };
        let head = line.peek().map(|t| t.text).unwrap_or_default();

        if name.is_none() {
            line.keyword("scenario")?;
            name = Some(line.next_word("scenario name")?.text.to_string());
            line.finish()?;
            continue;
        }

        if let Some(inter) = open.as_mut() {
            match head {
                "flow" => {
                    line.at += 1;
                    let src_tok = line.next_word("component id")?;
                    line.keyword("->")?;
                    let dst_tok = line.next_word("component id")?;
                    let profile = match line.peek().map(|t| t.text) {
                        Some("ramp") => {
                            line.at += 1;
                            let (v, pos) = line.number(false)?;
                            check_rate(v, pos)?;
                            if v > 1.0 {
                                return Err(ScenarioError::Syntax {
                                    line: pos.line,
                                    column: pos.column,
                                    found: format!("'{v}'"),
                                    expected: vec!["ramp fraction in [0, 1]".into()],
                                });
                            }
                            FlowProfile::Ramp { fraction: v }
                        }
                        Some("constant") => {
                            line.at += 1;
                            let (v, pos) = line.number(false)?;
                            check_rate(v, pos)?;
                            FlowProfile::Constant { rate: v }
                        }
                        _ => return line.fail(&["'ramp'", "'constant'"]),
                    };
                    line.finish()?;
                    refs.components.push(Reference {
                        name: src_tok.text.into(),
                        pos: src_tok.pos,
                    });
                    refs.components.push(Reference {
                        name: dst_tok.text.into(),
                        pos: dst_tok.pos,
                    });
                    inter.flows.push(Flow {
                        source: src_tok.text.into(),
                        target: dst_tok.text.into(),
                        profile,
                    });
                }
                "end" => {
                    line.at += 1;
                    line.finish()?;
                    interactions.extend(open.take());
                }
                _ => return line.fail(&["'flow'", "'end'"]),
            }
            continue;
        }

        match head {
            "observer" => {
                line.at += 1;
                let tok = line.next_word("observer id")?;
                line.finish()?;
                if observers.iter().any(|o| o == tok.text) {
                    return Err(duplicate(&tok));
                }
                observers.push(tok.text.into());
            }
            "component" => {
                line.at += 1;
                let decl = component(&mut line, &mut refs)?;
                if !seen_components.insert(decl.id.clone()) {
                    let pos = line.tokens[1].pos;
                    return Err(ScenarioError::Duplicate {
                        name: decl.id,
                        line: pos.line,
                        column: pos.column,
                    });
                }
                components.push(decl);
            }
            "interaction" => {
                line.at += 1;
                let kind_tok = line.next_word("interaction kind")?;
                let kind = InteractionKind::from_keyword(kind_tok.text).ok_or_else(|| {
                    ScenarioError::Syntax {
                        line: kind_tok.pos.line,
                        column: kind_tok.pos.column,
                        found: format!("'{}'", kind_tok.text),
                        expected: vec![
                            "'particle_detector'".into(),
                            "'physiological'".into(),
                            "'detector_detector'".into(),
                        ],
                    }
                })?;
                line.keyword("from")?;
                let (start, _) = line.number(false)?;
                line.keyword("to")?;
                let (stop, pos) = line.number(true)?;
                if stop <= start {
                    return Err(ScenarioError::Syntax {
                        line: pos.line,
                        column: pos.column,
                        found: format!("'{stop}'"),
                        expected: vec![format!("end time after {start}")],
                    });
                }
                let observer = if line.peek().is_some() {
                    line.keyword("observer")?;
                    let tok = line.next_word("observer id")?;
                    refs.observers.push(Reference {
                        name: tok.text.into(),
                        pos: tok.pos,
                    });
                    Some(tok.text.to_string())
                } else {
                    None
                };
                line.finish()?;
                open = Some(Interaction {
                    kind,
                    window: Window::new(start, stop),
                    observer,
                    flows: Vec::new(),
                });
            }
            _ => return line.fail(&["'observer'", "'component'", "'interaction'"]),
        }
    }

    let Some(name) = name else {
        return Err(ScenarioError::Syntax {
            line: last.line,
            column: last.column,
            found: "end of input".into(),
            expected: vec!["'scenario'".into()],
        });
    };
    if open.is_some() {
        return Err(ScenarioError::Syntax {
            line: last.line,
            column: last.column,
            found: "end of input".into(),
            expected: vec!["'end'".into()],
        });
    }
    for r in &refs.components {
        if !seen_components.contains(&r.name) {
            return Err(unknown(r));
        }
    }
    for r in &refs.observers {
        if !observers.contains(&r.name) {
            return Err(unknown(r));
        }
    }

    let scenario = Scenario {
        name,
        observers,
        components,
        interactions,
    };
    let total: f64 = scenario.components.iter().map(|c| c.weight).sum();
    if scenario.components.is_empty() || (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(ScenarioError::BadNormalization(total));
    }
    for inter in &scenario.interactions {
        for f in &inter.flows {
            let group = scenario.ramp_group(&f.source, inter.window);
            if group > 1.0 + WEIGHT_TOLERANCE {
                return Err(ScenarioError::RampOverflow {
                    source_id: f.source.clone(),
                    window: inter.window,
                    total: group,
                });
            }
        }
    }
    Ok(scenario)
}

fn component(line: &mut Line<'_>, refs: &mut Refs) -> Result<ComponentDecl, ScenarioError> {
    let id = line.next_word("component id")?.text.to_string();
    let mut decl = ComponentDecl {
        id,
        weight: 0.0,
        particle: "-".into(),
        detector: "-".into(),
        env: String::new(),
        brains: Vec::new(),
    };
    let mut env_set = false;
    while let Some(tok) = line.peek() {
        match tok.text {
            "weight" => {
                line.at += 1;
                let (w, pos) = line.number(false)?;
                if w < 0.0 {
                    return Err(ScenarioError::NegativeRate {
                        value: w,
                        line: pos.line,
                        column: pos.column,
                    });
                }
                decl.weight = w;
            }
            "particle" => {
                line.at += 1;
                decl.particle = line.next_word("particle label")?.text.into();
            }
            "detector" => {
                line.at += 1;
                decl.detector = line.next_word("detector label")?.text.into();
            }
            "env" => {
                line.at += 1;
                decl.env = line.next_word("environment tag")?.text.into();
                env_set = true;
            }
            "brain" => {
                line.at += 1;
                let obs = line.next_word("observer id")?;
                let name = line.next_word("brain state name")?;
                let kind = match line.peek().map(|t| t.text) {
                    Some("absent") => BrainKind::Absent,
                    Some("unknown") => BrainKind::UnknownX,
                    Some("ready") => BrainKind::Ready,
                    Some("conscious") => BrainKind::Conscious,
                    _ => return line.fail(&["'absent'", "'unknown'", "'ready'", "'conscious'"]),
                };
                line.at += 1;
                if decl.brains.iter().any(|b| b.observer == obs.text) {
                    return Err(duplicate(&obs));
                }
                refs.observers.push(Reference {
                    name: obs.text.into(),
                    pos: obs.pos,
                });
                decl.brains.push(BrainLabel::new(obs.text, name.text, kind));
            }
            _ => {
                return line.fail(&["'weight'", "'particle'", "'detector'", "'env'", "'brain'", "end of line"])
            }
        }
    }
    if !env_set {
        return line.fail(&["'env'"]);
    }
    Ok(decl)
}

fn check_rate(v: f64, pos: Pos) -> Result<(), ScenarioError> {
    if v < 0.0 {
        Err(ScenarioError::NegativeRate {
            value: v,
            line: pos.line,
            column: pos.column,
        })
    } else {
        Ok(())
    }
}

fn duplicate(tok: &Token<'_>) -> ScenarioError {
    ScenarioError::Duplicate {
        name: tok.text.into(),
        line: tok.pos.line,
        column: tok.pos.column,
    }
}

fn unknown(r: &Reference) -> ScenarioError {
    ScenarioError::UnknownReference {
        name: r.name.clone(),
        line: r.pos.line,
        column: r.pos.column,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EQ1: &str = "\
scenario eq1
component a weight 1 particle psi detector D_0 env e0
component b detector D_1 env e1   # grows from zero
interaction particle_detector from 0 to 1
  flow a -> b ramp 1
end
";

    #[test]
    fn minimal_eq1() {
        let s = parse(EQ1).unwrap();
        assert_eq!(s.components.len(), 2);
        assert_eq!(s.interactions.len(), 1);
        assert_eq!(s.interactions[0].kind, InteractionKind::ParticleDetector);
        assert_eq!(s.components[1].weight, 0.0);
        assert_eq!(s.components[1].particle, "-");
    }

    #[test]
    fn empty_component_list_is_bad_normalization() {
        assert_eq!(
            parse("scenario empty\n"),
            Err(ScenarioError::BadNormalization(0.0))
        );
    }

    #[test]
    fn dangling_reference_reports_position() {
        let src = EQ1.replace("flow a -> b", "flow a -> D_9");
        assert_eq!(
            parse(&src),
            Err(ScenarioError::UnknownReference {
                name: "D_9".into(),
                line: 5,
                column: 13,
            })
        );
    }

    #[test]
    fn negative_rate() {
        let src = EQ1.replace("ramp 1", "constant -0.5");
        assert!(matches!(
            parse(&src),
            Err(ScenarioError::NegativeRate { value, line: 5, .. }) if value == -0.5
        ));
    }

    #[test]
    fn syntax_error_lists_expected() {
        let err = parse("scenario x\nbogus line\n").unwrap_err();
        match err {
            ScenarioError::Syntax {
                line,
                column,
                expected,
                ..
            } => {
                assert_eq!((line, column), (2, 1));
                assert!(expected.contains(&"'component'".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unterminated_interaction() {
        let src = EQ1.replace("end\n", "");
        assert!(matches!(parse(&src), Err(ScenarioError::Syntax { .. })));
    }

    #[test]
    fn ramp_overflow() {
        let src = EQ1.replace(
            "  flow a -> b ramp 1\n",
            "  flow a -> b ramp 0.7\n  flow a -> b ramp 0.7\n",
        );
        assert!(matches!(parse(&src), Err(ScenarioError::RampOverflow { .. })));
    }

    #[test]
    fn undeclared_observer() {
        let src = EQ1.replace("env e1", "env e1 brain ghost B_1 ready");
        assert!(matches!(
            parse(&src),
            Err(ScenarioError::UnknownReference { name, .. }) if name == "ghost"
        ));
    }

    #[test]
    fn format_round_trip() {
        let s = parse(EQ1).unwrap();
        assert_eq!(parse(&s.format()).unwrap(), s);
    }
}
