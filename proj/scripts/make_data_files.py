"""Regenerates the word lists under data/.

stopwords_en.txt   the scikit-learn English stopword list (318 words)
background_en.tsv  general-English word counts derived from wordfreq
                   (frequency scaled to counts per 10^9 tokens)
"""
import pathlib

import wordfreq
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"
BACKGROUND_WORDS = 20000
SCALE = 1e9


def main():
    DATA.mkdir(exist_ok=True)
    (DATA / "stopwords_en.txt").write_text("\n".join(sorted(ENGLISH_STOP_WORDS)) + "\n")
    lines = []
    for word in wordfreq.top_n_list("en", BACKGROUND_WORDS, wordlist="large"):
        if not word.isalnum():
            continue
        count = round(wordfreq.word_frequency(word, "en", wordlist="large") * SCALE)
        if count > 0:
            lines.append(f"{word}\t{count}")
    (DATA / "background_en.tsv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
