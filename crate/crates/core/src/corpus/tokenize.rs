/// Splits text into words. Alphanumeric runs form words; every other visible
/// character is a token of its own, except that `.`/`,` between two digits
/// (decimal and thousands separators) and `-` between two alphanumerics stay
/// inside the word.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut words = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, words: &mut Vec<String>| {
        if !current.is_empty() {
            words.push(std::mem::take(current));
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, &mut words);
            continue;
        }
        if c.is_alphanumeric() {
            current.push(c);
            continue;
        }
        let prev = current.chars().last();
        let next = chars.get(i + 1).copied();
        let joins = match c {
            '.' | ',' => {
                prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit())
            }
            '-' => {
                prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric)
            }
            _ => false,
        };
        if joins {
            current.push(c);
        } else {
            flush(&mut current, &mut words);
            words.push(c.to_string());
        }
    }
    flush(&mut current, &mut words);
    words
}
