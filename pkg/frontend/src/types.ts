export type TaskKind = 'multiclass' | 'multilabel';

export type Label = number | number[];

/** Task as the annotation API serves it; never carries ground truth. */
export interface ApiTask {
    id: number;
    sample_id: number;
    kind: TaskKind;
    choices: number[];
    status: 'pending' | 'submitted';
    label: Label | null;
    m1_url: string;
    aux_url: string | null;
}

export interface RoundInfo {
    round: number;
    total: number;
    submitted: number;
    status: 'open' | 'complete';
}

export interface Progress {
    sampler: string;
    rounds: RoundInfo[];
    current: RoundInfo | null;
    cumulative_submitted: number;
}

export type SubmitResult =
    | { kind: 'ok'; task: ApiTask }
    | { kind: 'validation'; detail: string }
    | { kind: 'conflict'; storedLabel: Label };
