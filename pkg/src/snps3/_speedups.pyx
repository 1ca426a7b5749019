# cython: boundscheck=False, wraparound=False
"""Compiled versions of the tokenizer and mining loops (see ``_pykernels``)."""

cimport cython
from numpy cimport int64_t, uint8_t

BACKEND = "cython"


cpdef list wordpiece_word(str word, dict index, Py_ssize_t unk_id, Py_ssize_t max_chars):
    cdef Py_ssize_t n = len(word)
    cdef Py_ssize_t start = 0, end
    cdef object tid
    cdef Py_ssize_t found
    cdef list ids = []
    cdef str piece
    if n > max_chars:
        return [unk_id]
    while start < n:
        end = n
        found = -1
        while start < end:
            if start == 0:
                piece = word[start:end]
            else:
                piece = "##" + word[start:end]
            tid = index.get(piece)
            if tid is not None:
                found = <Py_ssize_t>tid
                break
            end -= 1
        if found < 0:
            return [unk_id]
        ids.append(found)
        start = end
    return ids


def wordpiece_words(list words, dict index, Py_ssize_t unk_id, Py_ssize_t max_chars):
    cdef list ids = []
    cdef list spans = []
    cdef Py_ssize_t w
    cdef object tid
    for w in range(len(words)):
        for tid in wordpiece_word(<str>words[w], index, unk_id, max_chars):
            ids.append(tid)
            spans.append(w)
    return ids, spans


def count_tagged(records, dict index, significant_tags, int64_t[::1] counts):
    cdef object words, tags
    cdef Py_ssize_t j, n
    cdef object tid
    for words, tags in records:
        n = len(words)
        for j in range(n):
            if tags[j] in significant_tags:
                tid = index.get(words[j])
                if tid is not None:
                    counts[<Py_ssize_t>tid] += 1


def scan_chosen(ids, const uint8_t[::1] skip, const uint8_t[::1] mask):
    cdef list out = []
    cdef Py_ssize_t p = 0
    cdef Py_ssize_t tid
    for tid in ids:
        if mask[tid] and not skip[p]:
            out.append(p)
        p += 1
    return out
