//! Comment- and string-aware search for `sorry` / `admit`.

const MARKERS: [&str; 2] = ["sorry", "admit"];

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '!' | '?')
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

/// True when `sorry` or `admit` occurs as a standalone token outside
/// comments (`--`, nested `/- -/`), string literals and char literals.
pub fn detect_incomplete(source: &str) -> bool {
    let chars: Vec<char> = source.chars().collect();
    let n = chars.len();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            '-' if next == Some('-') => {
                while i < n && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if next == Some('-') => {
                let mut depth = 1;
                i += 2;
                while i < n && depth > 0 {
                    if chars[i] == '/' && chars.get(i + 1) == Some(&'-') {
                        depth += 1;
                        i += 2;
                    } else if chars[i] == '-' && chars.get(i + 1) == Some(&'/') {
                        depth -= 1;
                        i += 2;
                    } else {
                        i += 1;
                    }
                }
            }
            '"' => {
                i += 1;
                while i < n && chars[i] != '"' {
                    i += if chars[i] == '\\' { 2 } else { 1 };
                }
                i += 1;
            }
            '\'' => {
                // Char literal such as 'a' or '\n'; a prime after an
                // identifier is consumed with the identifier instead.
                let close = if next == Some('\\') { i + 3 } else { i + 2 };
                if chars.get(close) == Some(&'\'') {
                    i = close + 1;
                } else {
                    i += 1;
                }
            }
            '`' => {
                // Quoted name literal: `sorry names the constant, it does not use it.
                i += 1;
                while i < n && (is_ident_char(chars[i]) || chars[i] == '.') {
                    i += 1;
                }
            }
            '«' => {
                while i < n && chars[i] != '»' {
                    i += 1;
                }
                i += 1;
            }
            c if is_ident_start(c) => {
                let start = i;
                let mut parts_start = i;
                let mut hit = false;
                loop {
                    while i < n && is_ident_char(chars[i]) {
                        i += 1;
                    }
                    let part: String = chars[parts_start..i].iter().collect();
                    if parts_start == start && MARKERS.contains(&part.as_str()) {
                        hit = true;
                    }
                    if i + 1 < n && chars[i] == '.' && is_ident_start(chars[i + 1]) {
                        i += 1;
                        parts_start = i;
                        hit = false;
                    } else {
                        break;
                    }
                }
                if hit {
                    return true;
                }
            }
            _ => i += 1,
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::detect_incomplete;

    #[test]
    fn spec_examples() {
        let attempt_one = "import tactic\ntheorem mathd_algebra_419\n  (a b : ℝ)\n  (h₀ : a = -1)\n  (h₁ : b = 5) :\n  -a - b^2 + 3 * (a * b) = -39 :=\nbegin\n  rw [h₀, h₁],\n  norm_num,\nend";
        assert!(!detect_incomplete(attempt_one));
        assert!(detect_incomplete("begin sorry end"));
        assert!(!detect_incomplete("-- sorry is forbidden\nbegin norm_num end"));
    }

    #[test]
    fn tokens_must_stand_alone() {
        assert!(!detect_incomplete("lemma sorry_free : true := trivial"));
        assert!(!detect_incomplete("have admitted : p := h"));
        assert!(!detect_incomplete("exact h.sorry"));
        assert!(detect_incomplete("begin admit, end"));
        assert!(detect_incomplete("by sorry."));
        assert!(detect_incomplete("exact (sorry : p)"));
    }

    #[test]
    fn comments_and_strings() {
        assert!(!detect_incomplete(
            "/- outer /- sorry -/ still comment -/ begin simp end"
        ));
        assert!(detect_incomplete("/- a -/ sorry"));
        assert!(!detect_incomplete(r#"#eval "no sorry \" here""#));
        assert!(!detect_incomplete("`sorry"));
        assert!(!detect_incomplete("h' h'' sorry'"));
    }
}
