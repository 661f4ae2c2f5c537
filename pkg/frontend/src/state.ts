import type { ApiTask, Label, Progress, SubmitResult, TaskKind } from './types.js';

/** One card in the console. Everything except the selection fields is a pure
 *  projection of the last API response, so a refresh loses nothing but the
 *  not-yet-submitted picks. */
export interface UiTaskView {
    id: number;
    sampleId: number;
    kind: TaskKind;
    choices: number[];
    m1Url: string;
    auxUrl: string | null;
    selection: number[];
    emptyConfirmed: boolean;
    status: 'pending' | 'inflight' | 'submitted' | 'conflict';
    serverLabel: Label | null;
    error: string | null;
}

export interface ConsoleState {
    tasks: UiTaskView[];
    cursor: number;
    connection: 'ok' | 'down';
    progress: Progress | null;
}

export function initialState(): ConsoleState {
    return { tasks: [], cursor: 0, connection: 'ok', progress: null };
}

function fromApi(t: ApiTask): UiTaskView {
    return {
        id: t.id,
        sampleId: t.sample_id,
        kind: t.kind,
        choices: t.choices,
        m1Url: t.m1_url,
        auxUrl: t.aux_url,
        selection: [],
        emptyConfirmed: false,
        status: t.status === 'submitted' ? 'submitted' : 'pending',
        serverLabel: t.label,
        error: null,
    };
}

/** Merge a poll result into the console, ordered by task id. Local selection
 *  state survives for tasks the server still reports as pending. */
export function applyPending(state: ConsoleState, tasks: ApiTask[]): ConsoleState {
    const prev = new Map(state.tasks.map((t) => [t.id, t]));
    const merged = tasks
        .slice()
        .sort((a, b) => a.id - b.id)
        .map((t) => {
            const old = prev.get(t.id);
            if (old && t.status === 'pending' && old.status !== 'submitted') {
                return { ...fromApi(t), selection: old.selection, emptyConfirmed: old.emptyConfirmed, status: old.status, error: old.error };
            }
            return fromApi(t);
        });
    const cursor = Math.min(state.cursor, Math.max(0, merged.length - 1));
    return { ...state, tasks: merged, cursor, connection: 'ok' };
}

export function applyProgress(state: ConsoleState, progress: Progress): ConsoleState {
    return { ...state, progress, connection: 'ok' };
}

export function connectionLost(state: ConsoleState): ConsoleState {
    return { ...state, connection: 'down' };
}

export function currentTask(state: ConsoleState): UiTaskView | null {
    return state.tasks[state.cursor] ?? null;
}

export function moveCursor(state: ConsoleState, delta: number): ConsoleState {
    if (state.tasks.length === 0) {
        return state;
    }
    const cursor = Math.min(state.tasks.length - 1, Math.max(0, state.cursor + delta));
    return { ...state, cursor };
}

function updateTask(state: ConsoleState, id: number, patch: Partial<UiTaskView>): ConsoleState {
    return {
        ...state,
        tasks: state.tasks.map((t) => (t.id === id ? { ...t, ...patch } : t)),
    };
}

/** Digit-key selection. Multiclass keeps exactly one pick; multilabel toggles
 *  set membership. Ignored while a submission is in flight or already done. */
export function toggleChoice(state: ConsoleState, choice: number): ConsoleState {
    const task = currentTask(state);
    if (!task || task.status === 'inflight' || task.status === 'submitted') {
        return state;
    }
    if (!task.choices.includes(choice)) {
        return state;
    }
    let selection: number[];
    if (task.kind === 'multiclass') {
        selection = task.selection[0] === choice ? [] : [choice];
    } else if (task.selection.includes(choice)) {
        selection = task.selection.filter((c) => c !== choice);
    } else {
        selection = [...task.selection, choice].sort((a, b) => a - b);
    }
    return updateTask(state, task.id, { selection, emptyConfirmed: false, error: null });
}

export function confirmEmpty(state: ConsoleState): ConsoleState {
    const task = currentTask(state);
    if (!task || task.kind !== 'multilabel' || task.selection.length > 0) {
        return state;
    }
    return updateTask(state, task.id, { emptyConfirmed: true });
}

/** Submit gate: multiclass needs exactly one pick; multilabel needs a
 *  non-empty subset, or an explicitly confirmed empty set. */
export function canSubmit(task: UiTaskView): boolean {
    if (task.status !== 'pending' && task.status !== 'conflict') {
        return false;
    }
    if (task.kind === 'multiclass') {
        return task.selection.length === 1;
    }
    return task.selection.length > 0 || task.emptyConfirmed;
}

export function labelFor(task: UiTaskView): Label {
    return task.kind === 'multiclass' ? task.selection[0]! : task.selection;
}

/** Mark the task in flight and return the label to POST, or null when the
 *  submission must not happen (invalid selection, double-click, done). */
export function beginSubmit(state: ConsoleState, id: number): { state: ConsoleState; label: Label } | null {
    const task = state.tasks.find((t) => t.id === id);
    if (!task || !canSubmit(task)) {
        return null;
    }
    return { state: updateTask(state, id, { status: 'inflight', error: null }), label: labelFor(task) };
}

export function applySubmitResult(state: ConsoleState, id: number, result: SubmitResult): ConsoleState {
    if (result.kind === 'ok') {
        return updateTask(state, id, { status: 'submitted', serverLabel: result.task.label, error: null });
    }
    if (result.kind === 'conflict') {
        return updateTask(state, id, { status: 'conflict', serverLabel: result.storedLabel, error: 'already labeled; stored label shown' });
    }
    return updateTask(state, id, { status: 'pending', error: result.detail });
}

/** Network failure during submit: back to pending, selection kept. */
export function submitFailed(state: ConsoleState, id: number): ConsoleState {
    return connectionLost(updateTask(state, id, { status: 'pending', error: 'network error, will retry' }));
}

export function pendingCount(state: ConsoleState): number {
    return state.tasks.filter((t) => t.status !== 'submitted').length;
}

export function roundComplete(state: ConsoleState): boolean {
    return state.tasks.length > 0 && pendingCount(state) === 0;
}
