import { OracleApi } from './api.js';
import {
    ConsoleState, UiTaskView, applyPending, applyProgress, applySubmitResult,
    beginSubmit, canSubmit, confirmEmpty, connectionLost, currentTask,
    initialState, moveCursor, roundComplete, submitFailed, toggleChoice,
} from './state.js';

const POLL_MS = 2000;

const api = new OracleApi();
let state: ConsoleState = initialState();
const inflight = new Set<number>();

function setState(next: ConsoleState): void {
    state = next;
    render();
}

async function poll(): Promise<void> {
    try {
        const [tasks, progress] = await Promise.all([api.fetchPending(), api.fetchProgress()]);
        setState(applyProgress(applyPending(state, tasks), progress));
    } catch {
        setState(connectionLost(state));
    }
}

async function submit(id: number): Promise<void> {
    if (inflight.has(id)) {
        return;
    }
    const begun = beginSubmit(state, id);
    if (!begun) {
        return;
    }
    inflight.add(id);
    setState(begun.state);
    try {
        const result = await api.submitLabel(id, begun.label);
        setState(applySubmitResult(state, id, result));
    } catch {
        setState(submitFailed(state, id));
    } finally {
        inflight.delete(id);
    }
}

function onKey(ev: KeyboardEvent): void {
    if (ev.key >= '0' && ev.key <= '9') {
        setState(toggleChoice(state, Number(ev.key)));
    } else if (ev.key === 'Enter') {
        const task = currentTask(state);
        if (task) {
            void submit(task.id);
        }
    } else if (ev.key === 'ArrowRight' || ev.key === 'ArrowDown') {
        setState(moveCursor(state, 1));
    } else if (ev.key === 'ArrowLeft' || ev.key === 'ArrowUp') {
        setState(moveCursor(state, -1));
    } else if (ev.key === 'e') {
        setState(confirmEmpty(state));
    }
}

function el(tag: string, cls: string, text = ''): HTMLElement {
    const node = document.createElement(tag);
    node.className = cls;
    if (text) {
        node.textContent = text;
    }
    return node;
}

function renderCard(task: UiTaskView, active: boolean): HTMLElement {
    const card = el('div', `card ${task.status}${active ? ' active' : ''}`);
    card.dataset.taskId = String(task.id);

    const images = el('div', 'images');
    const m1 = document.createElement('img');
    m1.src = task.m1Url;
    m1.alt = `sample ${task.sampleId}`;
    images.appendChild(m1);
    if (task.auxUrl) {
        const aux = document.createElement('img');
        aux.src = task.auxUrl;
        aux.alt = `sample ${task.sampleId} aux`;
        images.appendChild(aux);
    }
    card.appendChild(images);

    const choices = el('div', 'choices');
    for (const c of task.choices) {
        const btn = el('button', task.selection.includes(c) ? 'choice picked' : 'choice', String(c));
        btn.addEventListener('click', () => setState(toggleChoice({ ...state, cursor: state.tasks.indexOf(task) }, c)));
        choices.appendChild(btn);
    }
    card.appendChild(choices);

    const submitBtn = el('button', 'submit', task.status === 'submitted' ? 'submitted' : 'submit') as HTMLButtonElement;
    submitBtn.disabled = !canSubmit(task);
    submitBtn.addEventListener('click', () => void submit(task.id));
    card.appendChild(submitBtn);

    if (task.error) {
        card.appendChild(el('div', 'error', task.error));
    }
    if (task.status === 'conflict') {
        card.appendChild(el('div', 'conflict-note', `stored label: ${JSON.stringify(task.serverLabel)}`));
    }
    return card;
}

function render(): void {
    const root = document.getElementById('app');
    if (!root) {
        return;
    }
    root.textContent = '';

    const banner = el('div', state.connection === 'down' ? 'banner down' : 'banner ok');
    banner.textContent = state.connection === 'down' ? 'connection lost, retrying…' : '';
    root.appendChild(banner);

    const p = state.progress;
    if (p) {
        const cur = p.current;
        const text = cur
            ? `sampler ${p.sampler} | round ${cur.round}: ${cur.submitted}/${cur.total} | cumulative ${p.cumulative_submitted}`
            : `sampler ${p.sampler} | no rounds yet`;
        root.appendChild(el('div', 'progress', text));
        if (state.connection === 'down') {
            root.appendChild(el('div', 'stale', 'showing last known status'));
        }
    }

    if (state.tasks.length === 0) {
        root.appendChild(el('div', 'waiting', 'waiting for next round…'));
        return;
    }
    if (roundComplete(state)) {
        root.appendChild(el('div', 'waiting', 'round complete, training…'));
    }
    const list = el('div', 'cards');
    state.tasks.forEach((t, i) => list.appendChild(renderCard(t, i === state.cursor)));
    root.appendChild(list);
}

export function start(): void {
    document.addEventListener('keydown', onKey);
    render();
    void poll();
    setInterval(() => void poll(), POLL_MS);
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
    start();
}
