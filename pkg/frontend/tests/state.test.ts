import { describe, expect, it } from 'vitest';

import {
    applyPending, applyProgress, applySubmitResult, beginSubmit, canSubmit,
    confirmEmpty, connectionLost, currentTask, initialState, moveCursor,
    pendingCount, roundComplete, submitFailed, toggleChoice,
} from '../src/state.js';
import type { ApiTask, Progress } from '../src/types.js';

function apiTask(id: number, over: Partial<ApiTask> = {}): ApiTask {
    return {
        id,
        sample_id: id + 100,
        kind: 'multiclass',
        choices: [0, 1, 2, 3],
        status: 'pending',
        label: null,
        m1_url: `/api/sample/${id + 100}.png`,
        aux_url: `/api/sample/${id + 100}/aux.png`,
        ...over,
    };
}

function withTasks(...tasks: ApiTask[]) {
    return applyPending(initialState(), tasks);
}

describe('projection', () => {
    it('orders the queue by task id', () => {
        const s = withTasks(apiTask(5), apiTask(2), apiTask(9));
        expect(s.tasks.map((t) => t.id)).toEqual([2, 5, 9]);
    });

    it('keeps local selections across a refresh of still-pending tasks', () => {
        let s = withTasks(apiTask(1), apiTask(2));
        s = toggleChoice(s, 3);
        s = applyPending(s, [apiTask(1), apiTask(2)]);
        expect(s.tasks[0]!.selection).toEqual([3]);
    });

    it('drops tasks the server no longer reports and clamps the cursor', () => {
        let s = withTasks(apiTask(1), apiTask(2), apiTask(3));
        s = moveCursor(s, 2);
        s = applyPending(s, [apiTask(1)]);
        expect(s.tasks).toHaveLength(1);
        expect(s.cursor).toBe(0);
    });

    it('restores connection state on a successful poll', () => {
        let s = connectionLost(withTasks(apiTask(1)));
        expect(s.connection).toBe('down');
        s = applyPending(s, [apiTask(1)]);
        expect(s.connection).toBe('ok');
    });

    it('empty queue means waiting, not complete', () => {
        const s = withTasks();
        expect(roundComplete(s)).toBe(false);
        expect(currentTask(s)).toBeNull();
    });
});

describe('selection rules', () => {
    it('multiclass keeps exactly one pick and re-picking clears it', () => {
        let s = withTasks(apiTask(1));
        s = toggleChoice(s, 1);
        s = toggleChoice(s, 2);
        expect(s.tasks[0]!.selection).toEqual([2]);
        s = toggleChoice(s, 2);
        expect(s.tasks[0]!.selection).toEqual([]);
    });

    it('multilabel toggles set membership, kept sorted', () => {
        let s = withTasks(apiTask(1, { kind: 'multilabel' }));
        s = toggleChoice(s, 3);
        s = toggleChoice(s, 0);
        s = toggleChoice(s, 2);
        expect(s.tasks[0]!.selection).toEqual([0, 2, 3]);
        s = toggleChoice(s, 2);
        expect(s.tasks[0]!.selection).toEqual([0, 3]);
    });

    it('rejects choices outside the choice set', () => {
        let s = withTasks(apiTask(1));
        s = toggleChoice(s, 7);
        expect(s.tasks[0]!.selection).toEqual([]);
    });

    it('gates submit on a valid selection (client-side rejection)', () => {
        let s = withTasks(apiTask(1));
        expect(canSubmit(s.tasks[0]!)).toBe(false);
        expect(beginSubmit(s, 1)).toBeNull();
        s = toggleChoice(s, 2);
        expect(canSubmit(s.tasks[0]!)).toBe(true);
    });

    it('multilabel empty set needs explicit confirmation', () => {
        let s = withTasks(apiTask(1, { kind: 'multilabel' }));
        expect(canSubmit(s.tasks[0]!)).toBe(false);
        s = confirmEmpty(s);
        expect(canSubmit(s.tasks[0]!)).toBe(true);
        const begun = beginSubmit(s, 1);
        expect(begun?.label).toEqual([]);
    });

    it('picking a choice revokes a previous empty confirmation', () => {
        let s = withTasks(apiTask(1, { kind: 'multilabel' }));
        s = confirmEmpty(s);
        s = toggleChoice(s, 1);
        s = toggleChoice(s, 1);
        expect(canSubmit(s.tasks[0]!)).toBe(false);
    });
});

describe('submission lifecycle', () => {
    function selected() {
        return toggleChoice(withTasks(apiTask(1)), 2);
    }

    it('double submit is a no-op while in flight', () => {
        const begun = beginSubmit(selected(), 1)!;
        expect(begun.label).toBe(2);
        expect(beginSubmit(begun.state, 1)).toBeNull();
    });

    it('success marks the card submitted with the server label', () => {
        let s = beginSubmit(selected(), 1)!.state;
        s = applySubmitResult(s, 1, { kind: 'ok', task: apiTask(1, { status: 'submitted', label: 2 }) });
        expect(s.tasks[0]!.status).toBe('submitted');
        expect(s.tasks[0]!.serverLabel).toBe(2);
        expect(pendingCount(s)).toBe(0);
        expect(roundComplete(s)).toBe(true);
    });

    it('validation failure returns to pending with the message inline', () => {
        let s = beginSubmit(selected(), 1)!.state;
        s = applySubmitResult(s, 1, { kind: 'validation', detail: 'label not in choices' });
        expect(s.tasks[0]!.status).toBe('pending');
        expect(s.tasks[0]!.error).toContain('not in choices');
    });

    it('conflict surfaces the stored server label', () => {
        let s = beginSubmit(selected(), 1)!.state;
        s = applySubmitResult(s, 1, { kind: 'conflict', storedLabel: 3 });
        expect(s.tasks[0]!.status).toBe('conflict');
        expect(s.tasks[0]!.serverLabel).toBe(3);
    });

    it('network failure keeps the selection and flags the connection', () => {
        let s = beginSubmit(selected(), 1)!.state;
        s = submitFailed(s, 1);
        expect(s.tasks[0]!.status).toBe('pending');
        expect(s.tasks[0]!.selection).toEqual([2]);
        expect(s.connection).toBe('down');
    });
});

describe('progress', () => {
    it('stores the latest poll result', () => {
        const progress: Progress = {
            sampler: 'mvaal',
            rounds: [{ round: 1, total: 10, submitted: 4, status: 'open' }],
            current: { round: 1, total: 10, submitted: 4, status: 'open' },
            cumulative_submitted: 4,
        };
        const s = applyProgress(initialState(), progress);
        expect(s.progress?.current?.submitted).toBe(4);
    });
});
