//! Prompt templates shipped as text assets with `{placeholder}` syntax.
//! Literal braces are written `{{` and `}}`.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("missing template variable {0:?}")]
    MissingVariable(String),
    #[error("malformed template at byte {0}")]
    Malformed(usize),
}

macro_rules! assets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../templates/", $name, ".txt")))),*]
    };
}

const TEMPLATES: &[(&str, &str)] = assets![
    "idea_root_system",
    "idea_root_user",
    "idea_evolve_system",
    "idea_evolve_user",
    "coder_init_system",
    "coder_init_user",
    "coder_fix_system",
    "coder_fix_user",
    "coder_refine_system",
    "coder_refine_user",
    "judge_system",
    "judge_user",
    "feedback_quant_system",
    "feedback_quant_user",
    "feedback_qual_system",
    "feedback_qual_user",
    "feedback_causal_system",
    "feedback_causal_user",
    "feedback_diag_timeout_system",
    "feedback_diag_timeout_user",
    "feedback_diag_error_system",
    "feedback_diag_error_user",
    "synthesis_system",
    "synthesis_user",
];

pub fn template_ids() -> impl Iterator<Item = &'static str> {
    TEMPLATES.iter().map(|(id, _)| *id)
}

pub fn template_source(id: &str) -> Result<&'static str, TemplateError> {
    TEMPLATES
        .iter()
        .find(|(name, _)| *name == id)
        .map(|(_, src)| *src)
        .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
}

pub fn render_prompt(id: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    render_str(template_source(id)?, vars)
}

/// Placeholder names in order of first appearance.
pub fn placeholders(source: &str) -> Result<Vec<String>, TemplateError> {
    let mut out: Vec<String> = Vec::new();
    walk(source, |piece| {
        if let Piece::Var(name) = piece {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn render_str(source: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(source.len());
    walk(source, |piece| {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Var(name) => match vars.get(name) {
                Some(v) => out.push_str(v),
                None => return Err(TemplateError::MissingVariable(name.to_string())),
            },
        }
        Ok(())
    })?;
    Ok(out)
}

enum Piece<'a> {
    Text(&'a str),
    Var(&'a str),
}

fn walk<'a>(
    source: &'a str,
    mut visit: impl FnMut(Piece<'a>) -> Result<(), TemplateError>,
) -> Result<(), TemplateError> {
    let bytes = source.as_bytes();
    let mut i = 0;
    let mut text_start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' | b'}' if bytes.get(i + 1) == Some(&bytes[i]) => {
                visit(Piece::Text(&source[text_start..i + 1]))?;
                i += 2;
                text_start = i;
            }
            b'{' => {
                let close = source[i + 1..].find('}').map(|c| i + 1 + c).ok_or(TemplateError::Malformed(i))?;
                let name = &source[i + 1..close];
                if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
                    return Err(TemplateError::Malformed(i));
                }
                visit(Piece::Text(&source[text_start..i]))?;
                visit(Piece::Var(name))?;
                i = close + 1;
                text_start = i;
            }
            b'}' => return Err(TemplateError::Malformed(i)),
            _ => i += 1,
        }
    }
    visit(Piece::Text(&source[text_start..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn evolve_template_carries_all_blocks() {
        let v = vars(&[
            ("research_direction", "<<DIRECTION>>"),
            ("parent_architecture", "<<PARENT>>"),
            ("parent_performance", "<<PERF>>"),
            ("feedback_summary", "<<FEEDBACK>>"),
            ("hypothesis_memory", "<<MEMORY>>"),
            ("selected_hypothesis", "<<HYP>>"),
        ]);
        let out = render_prompt("idea_evolve_user", &v).unwrap();
        for block in v.values() {
            assert!(out.contains(block.as_str()), "{block} missing");
        }
        assert!(!out.contains('{'));
    }

    #[test]
    fn no_placeholders_is_identity() {
        assert_eq!(render_str("plain text", &BTreeMap::new()).unwrap(), "plain text");
    }

    #[test]
    fn missing_variable_is_named() {
        let v = vars(&[
            ("research_direction", "d"),
            ("parent_architecture", "p"),
            ("parent_performance", "q"),
            ("hypothesis_memory", "m"),
            ("selected_hypothesis", "h"),
        ]);
        assert_eq!(
            render_prompt("idea_evolve_user", &v).unwrap_err(),
            TemplateError::MissingVariable("feedback_summary".into())
        );
    }

    #[test]
    fn escaped_braces() {
        assert_eq!(render_str("{{\"a\": {x}}}", &vars(&[("x", "1")])).unwrap(), "{\"a\": 1}");
        assert!(matches!(render_str("{ oops", &BTreeMap::new()), Err(TemplateError::Malformed(0))));
    }

    #[test]
    fn every_asset_parses() {
        for id in template_ids() {
            let src = template_source(id).unwrap();
            let names = placeholders(src).unwrap_or_else(|e| panic!("{id}: {e}"));
            let v: BTreeMap<&str, String> = names.iter().map(|n| (n.as_str(), "x".to_string())).collect();
            render_str(src, &v).unwrap();
        }
    }

    #[test]
    fn system_prompts_ask_for_json() {
        for id in template_ids().filter(|id| id.ends_with("_system")) {
            assert!(template_source(id).unwrap().contains("JSON"), "{id}");
        }
    }
}
