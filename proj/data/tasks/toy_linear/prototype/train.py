# Fits y = w*x + b with full-batch gradient descent, reports held-out MSE.
import os
import random

LEARNING_RATE = 0.001
EPOCHS = 100


def make_data(n, rng):
    xs = [rng.uniform(0.0, 5.0) for _ in range(n)]
    ys = [2.0 * x + 1.0 + rng.gauss(0.0, 0.1) for x in xs]
    return xs, ys


def train(xs, ys):
    w, b = 0.0, 0.0
    n = len(xs)
    for _ in range(EPOCHS):
        gw = sum(2.0 * (w * x + b - y) * x for x, y in zip(xs, ys)) / n
        gb = sum(2.0 * (w * x + b - y) for x, y in zip(xs, ys)) / n
        w -= LEARNING_RATE * gw
        b -= LEARNING_RATE * gb
    return w, b


def main():
    rng = random.Random(int(os.environ.get("AUTORESEARCH_TRIAL_SEED", "0")))
    train_x, train_y = make_data(200, rng)
    test_x, test_y = make_data(50, rng)
    w, b = train(train_x, train_y)
    mse = sum((w * x + b - y) ** 2 for x, y in zip(test_x, test_y)) / len(test_x)
    print(f"w: {w:.4f}")
    print(f"b: {b:.4f}")
    print(f"mse: {mse:.6f}")


if __name__ == "__main__":
    main()
