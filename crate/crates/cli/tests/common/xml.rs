//! Minimal XML well-formedness checker for generated SVG: tags must nest
//! and match, attributes must be quoted, and text content must not contain
//! raw `<` or unescaped `&`.

/// Returns Err with a description of the first defect, if any.
pub fn check_well_formed(doc: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = doc;
    let mut saw_element = false;
    while let Some(lt) = rest.find('<') {
        let text = &rest[..lt];
        check_text(text)?;
        rest = &rest[lt + 1..];
        if let Some(stripped) = rest.strip_prefix("?") {
            let end = stripped.find("?>").ok_or("unterminated processing instruction")?;
            rest = &stripped[end + 2..];
            continue;
        }
        if let Some(stripped) = rest.strip_prefix("!--") {
            let end = stripped.find("-->").ok_or("unterminated comment")?;
            rest = &stripped[end + 3..];
            continue;
        }
        if let Some(stripped) = rest.strip_prefix("!") {
            // DOCTYPE and friends.
            let end = stripped.find('>').ok_or("unterminated declaration")?;
            rest = &stripped[end + 1..];
            continue;
        }
        let end = rest.find('>').ok_or("unterminated tag")?;
        let tag = &rest[..end];
        rest = &rest[end + 1..];
        if tag.contains('<') {
            return Err(format!("raw `<` inside tag `{tag}`"));
        }
        if let Some(name_part) = tag.strip_prefix('/') {
            let name = name_part.trim();
            match stack.pop() {
                Some(open) if open == name => {}
                Some(open) => return Err(format!("`</{name}>` closes `<{open}>`")),
                None => return Err(format!("`</{name}>` without an open element")),
            }
            continue;
        }
        let self_closing = tag.ends_with('/');
        let body = if self_closing { &tag[..tag.len() - 1] } else { tag };
        let name = body.split_whitespace().next().ok_or("empty tag")?.to_string();
        check_attributes(body)?;
        saw_element = true;
        if !self_closing {
            stack.push(name);
        }
    }
    check_text(rest)?;
    if !stack.is_empty() {
        return Err(format!("unclosed elements: {stack:?}"));
    }
    if !saw_element {
        return Err("no elements".into());
    }
    Ok(())
}

fn check_text(text: &str) -> Result<(), String> {
    if text.contains('>') && !text.trim().is_empty() {
        // Bare `>` in text is legal XML; flag nothing. Raw `<` is caught by
        // the scanner structure itself. Only unescaped ampersands remain.
    }
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        let tail = &rest[pos + 1..];
        let semi = tail.find(';').ok_or_else(|| format!("unescaped `&` in text: {text:?}"))?;
        let entity = &tail[..semi];
        let ok = matches!(entity, "amp" | "lt" | "gt" | "quot" | "apos")
            || entity.starts_with('#');
        if !ok {
            return Err(format!("unknown entity `&{entity};`"));
        }
        rest = &tail[semi + 1..];
    }
    Ok(())
}

fn check_attributes(tag_body: &str) -> Result<(), String> {
    // Everything after the name must be `key="value"` pairs.
    let mut rest = tag_body.trim();
    if let Some(space) = rest.find(char::is_whitespace) {
        rest = rest[space..].trim_start();
    } else {
        return Ok(());
    }
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| format!("attribute without value in `{tag_body}`"))?;
        let value_part = rest[eq + 1..].trim_start();
        let quote = value_part
            .chars()
            .next()
            .ok_or_else(|| format!("attribute without value in `{tag_body}`"))?;
        if quote != '"' && quote != '\'' {
            return Err(format!("unquoted attribute value in `{tag_body}`"));
        }
        let close = value_part[1..]
            .find(quote)
            .ok_or_else(|| format!("unterminated attribute value in `{tag_body}`"))?;
        rest = value_part[close + 2..].trim_start();
    }
    Ok(())
}
