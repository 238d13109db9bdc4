import random


def optimize(objective, dim, budget, lower, upper, seed):
    """Uniform random search with a shrinking local phase.

    Spends the first half of the budget sampling the whole box and the
    second half sampling around the best point with a step that halves
    whenever a full sweep brings no improvement.
    """
    rng = random.Random(seed)
    best_x = None
    best_y = float("inf")
    global_phase = budget // 2
    step = (upper - lower) / 4.0
    stalled = 0
    evals = 0
    while evals < budget:
        if evals < global_phase or best_x is None:
            x = [rng.uniform(lower, upper) for _ in range(dim)]
        else:
            x = []
            for xi in best_x:
                value = xi + rng.gauss(0.0, step)
                value = min(max(value, lower), upper)
                x.append(value)
        y = objective(x)
        evals += 1
        if y < best_y:
            best_y = y
            best_x = x
            stalled = 0
        else:
            stalled += 1
        if stalled >= 10 * dim:
            step *= 0.5
            stalled = 0
    return best_x, best_y
