"""Reference values frozen into the C++ tests, computed with numpy/sklearn."""
import itertools
import math

import numpy as np
from sklearn.metrics import adjusted_rand_score, silhouette_samples, silhouette_score


def ari_cases():
    print("ari swap", adjusted_rand_score([0, 0, 1, 1], [0, 1, 0, 1]))
    print("ari singletons vs block", adjusted_rand_score(list(range(6)), [0] * 6))
    pred = [(i * 7) % 5 for i in range(30)]
    gold = [(i * 3) % 4 for i in range(30)]
    print("ari formula labels %.17g" % adjusted_rand_score(gold, pred))
    pred = [i % 3 for i in range(12)]
    gold = [i // 4 for i in range(12)]
    print("ari mod/div %.17g" % adjusted_rand_score(gold, pred))


def silhouette_case():
    theta = np.array([0.0, 0.2, 1.2, 1.5])
    x = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    labels = [0, 0, 1, 1]
    print("silhouette samples", ["%.17g" % v for v in silhouette_samples(x, labels, metric="cosine")])
    print("silhouette mean %.17g" % silhouette_score(x, labels, metric="cosine"))
    # three clusters, one singleton
    theta = np.array([0.0, 0.1, 0.3, 1.4, 1.5, 3.0])
    x = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    labels = [0, 0, 0, 1, 1, 2]
    print("silhouette3 samples", ["%.17g" % v for v in silhouette_samples(x, labels, metric="cosine")])
    print("silhouette3 mean %.17g" % silhouette_score(x, labels, metric="cosine"))


def log_odds_case():
    alpha0 = 500.0
    yt, nt = 100.0, 1000.0
    yb, nb = 10.0, 100000.0
    a = max(alpha0 * yb / nb, 0.01)
    delta = math.log((yt + a) / (nt + alpha0 - yt - a)) - math.log((yb + a) / (nb + alpha0 - yb - a))
    var = 1.0 / (yt + a) + 1.0 / (yb + a)
    print("foo delta %.17g var %.17g z %.17g" % (delta, var, delta / math.sqrt(var)))


def dpp_case():
    k = np.array([[4.0, 1, 0], [1, 1, 0], [0, 0, 1]])
    print("det K", np.linalg.det(k))
    dets = {s: np.linalg.det(k[np.ix_(s, s)]) for s in itertools.combinations(range(3), 2)}
    z = sum(dets.values())
    print("pair probs", {s: d / z for s, d in dets.items()})


def tfidf_case():
    idf = math.log(3 / 2) + 1
    print("two-cluster score %.17g" % (5 * idf))


def merge_gram_case():
    g = np.array([[1.0, 0.9, 0.2], [0.9, 1.0, 0.2], [0.2, 0.2, 1.0]])
    print("gram cholesky rows\n", np.linalg.cholesky(g))


if __name__ == "__main__":
    ari_cases()
    silhouette_case()
    log_odds_case()
    dpp_case()
    tfidf_case()
    merge_gram_case()
