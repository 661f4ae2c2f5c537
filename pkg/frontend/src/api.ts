import type { ApiTask, Progress, SubmitResult } from './types.js';

/** Thin typed client over the annotation HTTP API. Network failures throw;
 *  application-level rejections (400/409) come back as values so the UI can
 *  render them inline. */
export class OracleApi {
    constructor(private readonly base: string = '') {}

    private url(path: string): string {
        return this.base + path;
    }

    async fetchPending(): Promise<ApiTask[]> {
        const res = await fetch(this.url('/api/tasks?status=pending'));
        if (!res.ok) {
            throw new Error(`fetch pending failed: ${res.status}`);
        }
        return (await res.json()) as ApiTask[];
    }

    async fetchProgress(): Promise<Progress> {
        const res = await fetch(this.url('/api/progress'));
        if (!res.ok) {
            throw new Error(`fetch progress failed: ${res.status}`);
        }
        return (await res.json()) as Progress;
    }

    async submitLabel(taskId: number, label: number | number[]): Promise<SubmitResult> {
        const res = await fetch(this.url(`/api/tasks/${taskId}/label`), {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ label }),
        });
        if (res.status === 400) {
            const body = await res.json();
            return { kind: 'validation', detail: String(body.detail ?? 'invalid label') };
        }
        if (res.status === 409) {
            const body = await res.json();
            return { kind: 'conflict', storedLabel: body.stored_label };
        }
        if (!res.ok) {
            throw new Error(`submit failed: ${res.status}`);
        }
        return { kind: 'ok', task: (await res.json()) as ApiTask };
    }
}
