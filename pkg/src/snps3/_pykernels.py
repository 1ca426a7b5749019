"""Pure-Python implementations of the hot loops.

Semantics must stay identical to ``_speedups.pyx``; the test suite runs both
against the same inputs.
"""

BACKEND = "python"


def wordpiece_word(word, index, unk_id, max_chars):
    """Greedy longest-match-first segmentation of one word into vocab ids."""
    n = len(word)
    if n > max_chars:
        return [unk_id]
    ids = []
    start = 0
    while start < n:
        end = n
        found = -1
        while start < end:
            piece = word[start:end] if start == 0 else "##" + word[start:end]
            tid = index.get(piece)
            if tid is not None:
                found = tid
                break
            end -= 1
        if found < 0:
            return [unk_id]
        ids.append(found)
        start = end
    return ids


def wordpiece_words(words, index, unk_id, max_chars):
    ids = []
    spans = []
    for w, word in enumerate(words):
        for tid in wordpiece_word(word, index, unk_id, max_chars):
            ids.append(tid)
            spans.append(w)
    return ids, spans


def count_tagged(records, index, significant_tags, counts):
    """Add one to ``counts[id]`` for every significant-tag word that is a whole vocab token.

    ``records`` is an iterable of ``(words, tags)`` pairs with words already lowercased.
    """
    for words, tags in records:
        for word, tag in zip(words, tags):
            if tag in significant_tags:
                tid = index.get(word)
                if tid is not None:
                    counts[tid] += 1


def scan_chosen(ids, skip, mask):
    """Positions ``p`` with ``mask[ids[p]]`` set and ``skip[p]`` clear."""
    return [p for p, tid in enumerate(ids) if mask[tid] and not skip[p]]
