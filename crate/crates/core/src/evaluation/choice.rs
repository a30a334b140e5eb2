use std::sync::LazyLock;

use regex::Regex;

/// Option letter for index `i` (`0 → 'A'`).
pub fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

pub fn letter_index(c: char) -> Option<usize> {
    c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
}

static PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\(([A-Za-z])\)").unwrap());
static MARKED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([A-Z])[.):](\s|$)").unwrap());
static BARE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([A-Za-z])[.)]?$").unwrap());

fn normalize(s: &str) -> String {
    s.trim().trim_end_matches('.').trim().to_lowercase()
}

/// Maps a free-form reply onto an option letter. Rules, first match wins:
/// a leading letter (`B`, `B.`, `B)`, `B:`, `(B)`), the full text of one
/// option (case-insensitive), or the text of exactly one option contained
/// in the reply. Anything else yields `None`.
pub fn extract_choice(reply: &str, options: &[String]) -> Option<char> {
    let r = reply.trim();
    let valid = |c: char| {
        let c = c.to_ascii_uppercase();
        letter_index(c).filter(|&i| i < options.len()).map(|_| c)
    };
    for re in [&*PAREN, &*MARKED, &*BARE] {
        if let Some(c) = re.captures(r).and_then(|m| m[1].chars().next()).and_then(valid) {
            return Some(c);
        }
    }
    let nr = normalize(r);
    if let Some(i) = options.iter().position(|o| normalize(o) == nr) {
        return Some(letter(i));
    }
    let lower = r.to_lowercase();
    let hits: Vec<usize> = options
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let o = normalize(o);
            !o.is_empty() && lower.contains(&o)
        })
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [i] => Some(letter(*i)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn documented_rules() {
        let o = opts(&["Invasive lobular carcinoma", "Invasive ductal carcinoma", "Mucinous carcinoma", "Lymphoma"]);
        assert_eq!(extract_choice("B. Invasive ductal carcinoma", &o), Some('B'));
        assert_eq!(extract_choice("(C)", &o), Some('C'));
        assert_eq!(extract_choice("d", &o), Some('D'));
        assert_eq!(extract_choice("A: lobular", &o), Some('A'));
        assert_eq!(extract_choice("mucinous carcinoma", &o), Some('C'));
        assert_eq!(extract_choice("It is most consistent with lymphoma here.", &o), Some('D'));
        assert_eq!(extract_choice("A tumor is present", &o), None);
        assert_eq!(extract_choice("Invasive lobular carcinoma or Invasive ductal carcinoma", &o), None);
        assert_eq!(extract_choice("E.", &o), None);
        assert_eq!(extract_choice("", &o), None);
    }
}
